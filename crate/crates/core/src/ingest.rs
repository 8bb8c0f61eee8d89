//! CSV voyage ingestion, validation, and per-class summary statistics.
//!
//! Input format: `voyage_id,timestamp,lat,lon[,fuel_rate,speed]` with a
//! header row. Timestamps are epoch seconds (integer or fractional) or
//! RFC 3339 strings. Points are bucketed to one-second resolution, keeping
//! the first record within each second.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use crate::error::{Error, Result};
use crate::geo::{haversine_distance, GeoPoint};

/// One timestamped position fix, with optional fuel-rate (L/h) and speed
/// (m/s) channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoyagePoint {
    /// Whole seconds since the epoch (the one-second bucket).
    pub timestamp: i64,
    pub position: GeoPoint,
    pub fuel_rate: Option<f64>,
    pub speed: Option<f64>,
}

/// An ordered, timestamped point sequence with a unique ID.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Voyage {
    pub id: String,
    pub points: Vec<VoyagePoint>,
}

impl Voyage {
    pub fn duration_secs(&self) -> f64 {
        (self.points.last().unwrap().timestamp - self.points[0].timestamp) as f64
    }

    /// Track length: haversine summed over consecutive points.
    pub fn distance_m(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| haversine_distance(w[0].position, w[1].position))
            .sum()
    }
}

/// A voyage with its path-class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledVoyage {
    pub voyage: Voyage,
    pub class_label: String,
}

/// Per-class summary of the quantities the route operator cares about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub class_label: String,
    pub voyage_count: usize,
    /// Litres per voyage, present only when the fuel channel exists.
    pub mean_fuel: Option<f64>,
    pub mean_duration: f64,
    pub mean_distance: f64,
    pub mean_speed: f64,
}

/// Result of parsing: the surviving voyages plus audit counters.
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub voyages: Vec<Voyage>,
    /// Voyages dropped for having fewer than 2 points after dedup.
    pub dropped_voyages: usize,
    /// Rows skipped under lenient parsing.
    pub skipped_rows: usize,
}

fn parse_timestamp(raw: &str, line: u64) -> Result<f64> {
    if let Ok(v) = raw.parse::<f64>() {
        if v.is_finite() {
            return Ok(v);
        }
    }
    if let Ok(dt) = OffsetDateTime::parse(raw, &Rfc3339) {
        return Ok(dt.unix_timestamp() as f64 + f64::from(dt.nanosecond()) / 1e9);
    }
    Err(Error::BadRow {
        line,
        message: format!("unparseable timestamp `{raw}`"),
    })
}

fn parse_opt_f64(raw: Option<&str>, name: &str, line: u64) -> Result<Option<f64>> {
    match raw {
        None => Ok(None),
        Some(s) if s.trim().is_empty() => Ok(None),
        Some(s) => s
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| Error::BadRow {
                line,
                message: format!("unparseable {name} `{s}`"),
            }),
    }
}

/// Parses voyages from CSV. With `lenient` set, malformed rows are skipped
/// and counted instead of failing the whole file.
pub fn parse_voyages<R: Read>(reader: R, lenient: bool) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let id_col = col("voyage_id")?;
    let ts_col = col("timestamp")?;
    let lat_col = col("lat")?;
    let lon_col = col("lon")?;
    let fuel_col = headers.iter().position(|h| h.trim() == "fuel_rate");
    let speed_col = headers.iter().position(|h| h.trim() == "speed");

    // voyage_id -> raw (timestamp, point) rows, in file order.
    let mut raw: BTreeMap<String, Vec<(f64, VoyagePoint)>> = BTreeMap::new();
    let mut skipped_rows = 0usize;

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse_row = || -> Result<(String, f64, VoyagePoint)> {
            let get = |i: usize| -> Result<&str> {
                record.get(i).ok_or_else(|| Error::BadRow {
                    line,
                    message: "short row".to_string(),
                })
            };
            let id = get(id_col)?.trim().to_string();
            if id.is_empty() {
                return Err(Error::BadRow {
                    line,
                    message: "empty voyage_id".to_string(),
                });
            }
            let ts = parse_timestamp(get(ts_col)?.trim(), line)?;
            let lat: f64 = get(lat_col)?.trim().parse().map_err(|_| Error::BadRow {
                line,
                message: format!("unparseable lat `{}`", record.get(lat_col).unwrap_or("")),
            })?;
            let lon: f64 = get(lon_col)?.trim().parse().map_err(|_| Error::BadRow {
                line,
                message: format!("unparseable lon `{}`", record.get(lon_col).unwrap_or("")),
            })?;
            let position = GeoPoint::new(lat, lon).map_err(|e| Error::BadRow {
                line,
                message: e.to_string(),
            })?;
            let fuel_rate = parse_opt_f64(fuel_col.and_then(|i| record.get(i)), "fuel_rate", line)?;
            let speed = parse_opt_f64(speed_col.and_then(|i| record.get(i)), "speed", line)?;
            Ok((
                id,
                ts,
                VoyagePoint {
                    timestamp: ts.floor() as i64,
                    position,
                    fuel_rate,
                    speed,
                },
            ))
        };
        match parse_row() {
            Ok((id, ts, pt)) => raw.entry(id).or_default().push((ts, pt)),
            Err(e) => {
                if lenient {
                    skipped_rows += 1;
                } else {
                    return Err(e);
                }
            }
        }
    }

    let mut voyages = Vec::new();
    let mut dropped_voyages = 0usize;
    for (id, mut rows) in raw {
        // Sort by raw timestamp (stable), then keep the first record in each
        // one-second bucket.
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut points: Vec<VoyagePoint> = Vec::with_capacity(rows.len());
        for (_, pt) in rows {
            if points.last().map(|p| p.timestamp) != Some(pt.timestamp) {
                points.push(pt);
            }
        }
        if points.len() < 2 {
            dropped_voyages += 1;
            continue;
        }
        voyages.push(Voyage { id, points });
    }

    Ok(ParseOutcome {
        voyages,
        dropped_voyages,
        skipped_rows,
    })
}

/// Writes voyages back out in the ingestion CSV format.
pub fn write_voyages<W: Write>(writer: W, voyages: &[Voyage]) -> Result<()> {
    let has_fuel = voyages.iter().any(|v| v.points.iter().any(|p| p.fuel_rate.is_some()));
    let has_speed = voyages.iter().any(|v| v.points.iter().any(|p| p.speed.is_some()));
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["voyage_id", "timestamp", "lat", "lon"];
    if has_fuel {
        header.push("fuel_rate");
    }
    if has_speed {
        header.push("speed");
    }
    wtr.write_record(&header)?;
    for v in voyages {
        for p in &v.points {
            let mut rec = vec![
                v.id.clone(),
                p.timestamp.to_string(),
                format!("{:.7}", p.position.lat),
                format!("{:.7}", p.position.lon),
            ];
            if has_fuel {
                rec.push(p.fuel_rate.map(|f| format!("{f:.4}")).unwrap_or_default());
            }
            if has_speed {
                rec.push(p.speed.map(|s| format!("{s:.4}")).unwrap_or_default());
            }
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a `voyage_id,class_label` labels file.
pub fn parse_labels<R: Read>(reader: R) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = headers
        .iter()
        .position(|h| h.trim() == "voyage_id")
        .ok_or_else(|| Error::MissingColumn("voyage_id".to_string()))?;
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "class_label")
        .ok_or_else(|| Error::MissingColumn("class_label".to_string()))?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record.get(id_col).ok_or_else(|| Error::BadRow {
            line,
            message: "short row".to_string(),
        })?;
        let label = record.get(label_col).ok_or_else(|| Error::BadRow {
            line,
            message: "short row".to_string(),
        })?;
        out.push((id.trim().to_string(), label.trim().to_string()));
    }
    Ok(out)
}

pub fn write_labels<W: Write>(writer: W, labels: &[(String, String)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["voyage_id", "class_label"])?;
    for (id, label) in labels {
        wtr.write_record([id, label])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Fuel burned over a voyage in litres: trapezoidal integration of the L/h
/// channel over time. `None` when any point lacks the channel.
fn voyage_fuel_liters(v: &Voyage) -> Option<f64> {
    let rates: Option<Vec<f64>> = v.points.iter().map(|p| p.fuel_rate).collect();
    let rates = rates?;
    let mut total = 0.0;
    for (w, r) in v.points.windows(2).zip(rates.windows(2)) {
        let dt_hours = (w[1].timestamp - w[0].timestamp) as f64 / 3600.0;
        total += 0.5 * (r[0] + r[1]) * dt_hours;
    }
    Some(total)
}

/// One summary per distinct label, ordered by label.
pub fn class_statistics(voyages: &[LabeledVoyage]) -> Vec<ClassSummary> {
    let mut by_class: BTreeMap<&str, Vec<&Voyage>> = BTreeMap::new();
    for lv in voyages {
        by_class.entry(&lv.class_label).or_default().push(&lv.voyage);
    }
    by_class
        .into_iter()
        .map(|(label, vs)| {
            let n = vs.len() as f64;
            let durations: Vec<f64> = vs.iter().map(|v| v.duration_secs()).collect();
            let distances: Vec<f64> = vs.iter().map(|v| v.distance_m()).collect();
            let speeds: Vec<f64> = distances
                .iter()
                .zip(&durations)
                .map(|(d, t)| if *t > 0.0 { d / t } else { 0.0 })
                .collect();
            let fuels: Option<Vec<f64>> = vs.iter().map(|v| voyage_fuel_liters(v)).collect();
            ClassSummary {
                class_label: label.to_string(),
                voyage_count: vs.len(),
                mean_fuel: fuels.map(|f| f.iter().sum::<f64>() / n),
                mean_duration: durations.iter().sum::<f64>() / n,
                mean_distance: distances.iter().sum::<f64>() / n,
                mean_speed: speeds.iter().sum::<f64>() / n,
            }
        })
        .collect()
}

/// Statistics CSV: `class_label,voyage_count,mean_fuel,mean_duration,mean_distance,mean_speed`.
pub fn write_class_statistics<W: Write>(writer: W, stats: &[ClassSummary]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "class_label",
        "voyage_count",
        "mean_fuel",
        "mean_duration",
        "mean_distance",
        "mean_speed",
    ])?;
    for s in stats {
        wtr.write_record([
            s.class_label.clone(),
            s.voyage_count.to_string(),
            s.mean_fuel.map(|f| format!("{f:.4}")).unwrap_or_default(),
            format!("{:.3}", s.mean_duration),
            format!("{:.3}", s.mean_distance),
            format!("{:.4}", s.mean_speed),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(csv: &str) -> ParseOutcome {
        parse_voyages(csv.as_bytes(), false).unwrap()
    }

    #[test]
    fn groups_one_voyage() {
        let out = parse("voyage_id,timestamp,lat,lon\nv1,0,59.4,18.35\nv1,1,59.4001,18.35\nv1,2,59.4002,18.35\n");
        assert_eq!(out.voyages.len(), 1);
        assert_eq!(out.voyages[0].points.len(), 3);
        assert_eq!(out.dropped_voyages, 0);
    }

    #[test]
    fn sub_second_rows_collapse_to_first() {
        let out = parse("voyage_id,timestamp,lat,lon\nv1,0.2,59.4,18.35\nv1,0.9,59.5,18.35\nv1,2,59.41,18.35\n");
        assert_eq!(out.voyages[0].points.len(), 2);
        // first record in the 0-second bucket survives
        assert_eq!(out.voyages[0].points[0].position.lat, 59.4);
    }

    #[test]
    fn interleaved_voyages_are_separated_and_sorted() {
        let mut csv = String::from("voyage_id,timestamp,lat,lon\n");
        for t in [4, 2, 0, 3, 1] {
            csv.push_str(&format!("a,{t},59.4,18.35\n"));
            csv.push_str(&format!("b,{t},59.5,18.40\n"));
        }
        let out = parse(&csv);
        assert_eq!(out.voyages.len(), 2);
        for v in &out.voyages {
            assert_eq!(v.points.len(), 5);
            assert!(v.points.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        }
    }

    #[test]
    fn short_voyages_dropped_with_count() {
        let out = parse("voyage_id,timestamp,lat,lon\nv1,0,59.4,18.35\nv2,0,59.4,18.35\nv2,1,59.4,18.35\n");
        assert_eq!(out.voyages.len(), 1);
        assert_eq!(out.voyages[0].id, "v2");
        assert_eq!(out.dropped_voyages, 1);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let err = parse_voyages("voyage_id,timestamp,lat\nv1,0,59.4\n".as_bytes(), false);
        match err {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "lon"),
            other => panic!("expected MissingColumn, got {other:?}"),
        }
    }

    #[test]
    fn bad_row_reports_line_number() {
        let err = parse_voyages(
            "voyage_id,timestamp,lat,lon\nv1,0,59.4,18.35\nv1,nope,59.4,18.35\n".as_bytes(),
            false,
        );
        match err {
            Err(Error::BadRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected BadRow, got {other:?}"),
        }
    }

    #[test]
    fn lenient_skips_bad_rows() {
        let out = parse_voyages(
            "voyage_id,timestamp,lat,lon\nv1,0,59.4,18.35\nv1,nope,59.4,18.35\nv1,2,59.4,18.35\n".as_bytes(),
            true,
        )
        .unwrap();
        assert_eq!(out.skipped_rows, 1);
        assert_eq!(out.voyages[0].points.len(), 2);
    }

    #[test]
    fn rfc3339_timestamps_accepted() {
        let out = parse(
            "voyage_id,timestamp,lat,lon\nv1,2022-07-01T00:00:00Z,59.4,18.35\nv1,2022-07-01T00:00:01Z,59.4,18.35\n",
        );
        assert_eq!(out.voyages[0].points[0].timestamp, 1656633600);
        assert_eq!(out.voyages[0].points.len(), 2);
    }

    #[test]
    fn round_trip_is_idempotent() {
        let src = "voyage_id,timestamp,lat,lon,fuel_rate,speed\nv1,0,59.4,18.35,12.5,4.2\nv1,1,59.4001,18.3501,12.6,4.3\nv2,0,59.41,18.36,,\nv2,2,59.4101,18.3601,,\n";
        let first = parse(src);
        let mut buf = Vec::new();
        write_voyages(&mut buf, &first.voyages).unwrap();
        let second = parse_voyages(buf.as_slice(), false).unwrap();
        assert_eq!(first.voyages, second.voyages);
    }

    #[test]
    fn single_voyage_statistics() {
        // two points 3600 s apart; pick latitudes 4200 m apart on the meridian
        let dlat = 4200.0 / (std::f64::consts::PI * crate::geo::EARTH_RADIUS_M / 180.0);
        let v = Voyage {
            id: "v1".into(),
            points: vec![
                VoyagePoint {
                    timestamp: 0,
                    position: GeoPoint::new(59.4, 18.35).unwrap(),
                    fuel_rate: None,
                    speed: None,
                },
                VoyagePoint {
                    timestamp: 3600,
                    position: GeoPoint::new(59.4 + dlat, 18.35).unwrap(),
                    fuel_rate: None,
                    speed: None,
                },
            ],
        };
        let stats = class_statistics(&[LabeledVoyage {
            voyage: v,
            class_label: "A".into(),
        }]);
        assert_eq!(stats.len(), 1);
        assert!((stats[0].mean_duration - 3600.0).abs() < 1e-9);
        assert!((stats[0].mean_distance - 4200.0).abs() < 0.5);
        assert!((stats[0].mean_speed - 7.0 / 6.0).abs() < 1e-3);
        assert!(stats[0].mean_fuel.is_none());
    }

    #[test]
    fn mean_of_two_distances() {
        let mk = |id: &str, metres: f64| {
            let dlat = metres / (std::f64::consts::PI * crate::geo::EARTH_RADIUS_M / 180.0);
            LabeledVoyage {
                voyage: Voyage {
                    id: id.into(),
                    points: vec![
                        VoyagePoint {
                            timestamp: 0,
                            position: GeoPoint::new(59.4, 18.35).unwrap(),
                            fuel_rate: None,
                            speed: None,
                        },
                        VoyagePoint {
                            timestamp: 100,
                            position: GeoPoint::new(59.4 + dlat, 18.35).unwrap(),
                            fuel_rate: None,
                            speed: None,
                        },
                    ],
                },
                class_label: "A".into(),
            }
        };
        let stats = class_statistics(&[mk("v1", 1000.0), mk("v2", 3000.0)]);
        assert!((stats[0].mean_distance - 2000.0).abs() < 0.5);
        assert_eq!(stats[0].voyage_count, 2);
    }

    #[test]
    fn statistics_counts_sum_to_total() {
        let mk = |id: &str, label: &str| LabeledVoyage {
            voyage: Voyage {
                id: id.into(),
                points: vec![
                    VoyagePoint {
                        timestamp: 0,
                        position: GeoPoint::new(59.4, 18.35).unwrap(),
                        fuel_rate: None,
                        speed: None,
                    },
                    VoyagePoint {
                        timestamp: 1,
                        position: GeoPoint::new(59.4001, 18.35).unwrap(),
                        fuel_rate: None,
                        speed: None,
                    },
                ],
            },
            class_label: label.into(),
        };
        let data = vec![mk("a", "X"), mk("b", "X"), mk("c", "Y"), mk("d", "Z")];
        let stats = class_statistics(&data);
        let total: usize = stats.iter().map(|s| s.voyage_count).sum();
        assert_eq!(total, data.len());
    }

    #[test]
    fn empty_input_gives_empty_stats() {
        assert!(class_statistics(&[]).is_empty());
    }

    #[test]
    fn fuel_integration() {
        // constant 12 L/h over 30 minutes -> 6 L
        let v = Voyage {
            id: "v".into(),
            points: (0..=1800)
                .step_by(600)
                .map(|t| VoyagePoint {
                    timestamp: t,
                    position: GeoPoint::new(59.4, 18.35).unwrap(),
                    fuel_rate: Some(12.0),
                    speed: None,
                })
                .collect(),
        };
        let stats = class_statistics(&[LabeledVoyage {
            voyage: v,
            class_label: "A".into(),
        }]);
        assert!((stats[0].mean_fuel.unwrap() - 6.0).abs() < 1e-9);
    }
}
