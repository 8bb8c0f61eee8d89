//! Average nearest neighbor distance between paths and the pairwise
//! distance matrix.
//!
//! The directed measure averages, over the points of one path, the distance
//! to the closest point of the other path. It is directional as written, so
//! the matrix stores the mean of both directions.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{euclidean_distance, LocalPoint};

/// Paths shorter than this skip the sorted index; a linear scan is cheaper.
const INDEX_MIN_POINTS: usize = 64;

/// A projected voyage track. Point order is irrelevant for the distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub voyage_id: String,
    pub points: Vec<LocalPoint>,
}

impl Path {
    pub fn new(voyage_id: impl Into<String>, points: Vec<LocalPoint>) -> Result<Self> {
        let voyage_id = voyage_id.into();
        if points.is_empty() {
            return Err(Error::EmptyPath(voyage_id));
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::EmptyPath(voyage_id));
        }
        Ok(Path { voyage_id, points })
    }
}

/// Symmetric m×m matrix of pairwise path distances in metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Row i as a feature vector (distances to every path).
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i]
    }
}

/// Exhaustive nearest neighbor distance from `p` to any point of `path`.
pub fn nearest_neighbor_distance(p: LocalPoint, path: &Path) -> f64 {
    path.points
        .iter()
        .map(|q| euclidean_distance(p, *q))
        .fold(f64::INFINITY, f64::min)
}

/// Index over one path's points for exact nearest neighbor queries: points
/// sorted by x so each query reduces to a scan over a provably sufficient
/// x-window. A nearest-by-x probe gives an upper bound `b`; any point closer
/// than `b` must have |x - qx| < b, so the window [qx - b, qx + b] contains
/// the true nearest neighbor and a contiguous minimum over it is exact.
pub struct NnIndex<'a> {
    path: &'a Path,
    sorted: Option<SortedTrack>,
}

/// Block size for the y-bounds skip list over the x-sorted points.
const NN_BLOCK: usize = 32;

struct SortedTrack {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Per block of `NN_BLOCK` consecutive points: (min y, max y), letting the
    /// scan discard whole blocks that cannot beat the current best distance.
    y_bounds: Vec<(f64, f64)>,
}

impl<'a> NnIndex<'a> {
    pub fn build(path: &'a Path) -> Self {
        let sorted = if path.points.len() >= INDEX_MIN_POINTS {
            let mut order: Vec<usize> = (0..path.points.len()).collect();
            order.sort_by(|&a, &b| path.points[a].x.total_cmp(&path.points[b].x));
            let xs: Vec<f64> = order.iter().map(|&i| path.points[i].x).collect();
            let ys: Vec<f64> = order.iter().map(|&i| path.points[i].y).collect();
            let y_bounds = ys
                .chunks(NN_BLOCK)
                .map(|c| {
                    let min = c.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (min, max)
                })
                .collect();
            Some(SortedTrack { xs, ys, y_bounds })
        } else {
            None
        };
        NnIndex { path, sorted }
    }

    /// Exact nearest neighbor distance from `p` to the indexed path.
    pub fn nearest_distance(&self, p: LocalPoint) -> f64 {
        let Some(track) = &self.sorted else {
            return nearest_neighbor_distance(p, self.path);
        };
        let n = track.xs.len();
        let at = track.xs.partition_point(|&x| x < p.x);
        // Upper bound from the x-nearest points on either side.
        let mut best2 = f64::INFINITY;
        for i in [at.wrapping_sub(1), at] {
            if i < n {
                let (dx, dy) = (track.xs[i] - p.x, track.ys[i] - p.y);
                best2 = best2.min(dx * dx + dy * dy);
            }
        }
        let b = best2.sqrt();
        let lo = track.xs[..at].partition_point(|&x| x < p.x - b);
        let hi = at + track.xs[at..].partition_point(|&x| x <= p.x + b);
        for block in lo / NN_BLOCK..hi.div_ceil(NN_BLOCK) {
            let start = (block * NN_BLOCK).max(lo);
            let end = ((block + 1) * NN_BLOCK).min(hi);
            // Lower bound on any distance from this block: x is sorted, so dx
            // is at least the nearer block edge; dy at least the gap to the
            // block's y range.
            let dx_min = (p.x - track.xs[end - 1]).max(track.xs[start] - p.x).max(0.0);
            let (y_lo, y_hi) = track.y_bounds[block];
            let dy_min = (p.y - y_hi).max(y_lo - p.y).max(0.0);
            if dx_min * dx_min + dy_min * dy_min >= best2 {
                continue;
            }
            for i in start..end {
                let (dx, dy) = (track.xs[i] - p.x, track.ys[i] - p.y);
                let d2 = dx * dx + dy * dy;
                if d2 < best2 {
                    best2 = d2;
                }
            }
        }
        best2.sqrt()
    }
}

/// Eq-style directed average nearest neighbor distance from `i` to `j`.
pub fn directed_annd(i: &Path, j: &Path) -> f64 {
    let index = NnIndex::build(j);
    directed_annd_with_index(i, &index)
}

fn directed_annd_with_index(i: &Path, j_index: &NnIndex) -> f64 {
    let sum: f64 = i.points.iter().map(|p| j_index.nearest_distance(*p)).sum();
    sum / i.points.len() as f64
}

/// Mean of both directed distances; symmetric by construction.
pub fn symmetric_annd(i: &Path, j: &Path) -> f64 {
    let (ij, ji) = directed_annd_pair(i, j);
    0.5 * (ij + ji)
}

/// Both directed values, for debug output.
pub fn directed_annd_pair(i: &Path, j: &Path) -> (f64, f64) {
    let index_j = NnIndex::build(j);
    let index_i = NnIndex::build(i);
    (
        directed_annd_with_index(i, &index_j),
        directed_annd_with_index(j, &index_i),
    )
}

/// Full symmetric matrix over `paths`, parallelized over unordered pairs.
/// Output is independent of worker count: every pair writes a disjoint cell.
pub fn distance_matrix(paths: &[Path]) -> Result<DistanceMatrix> {
    let m = paths.len();
    if m < 2 {
        return Err(Error::TooFewPaths(m));
    }
    let indices: Vec<NnIndex> = paths.par_iter().map(NnIndex::build).collect();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    let computed: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let ij = directed_annd_with_index(&paths[i], &indices[j]);
            let ji = directed_annd_with_index(&paths[j], &indices[i]);
            0.5 * (ij + ji)
        })
        .collect();
    let mut values = vec![vec![0.0; m]; m];
    for (&(i, j), &v) in pairs.iter().zip(&computed) {
        values[i][j] = v;
        values[j][i] = v;
    }
    Ok(DistanceMatrix {
        ids: paths.iter().map(|p| p.voyage_id.clone()).collect(),
        values,
    })
}

/// Matrix CSV: header row and column carry voyage ids, 6 decimal places.
pub fn write_matrix<W: Write>(writer: W, matrix: &DistanceMatrix) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![String::new()];
    header.extend(matrix.ids.iter().cloned());
    wtr.write_record(&header)?;
    for (id, row) in matrix.ids.iter().zip(&matrix.values) {
        let mut rec = vec![id.clone()];
        rec.extend(row.iter().map(|v| format!("{v:.6}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_matrix<R: Read>(reader: R) -> Result<DistanceMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut records = rdr.records();
    let header = records
        .next()
        .ok_or_else(|| Error::Input("empty matrix file".to_string()))??;
    let ids: Vec<String> = header.iter().skip(1).map(|s| s.to_string()).collect();
    let mut values = Vec::with_capacity(ids.len());
    for record in records {
        let record = record?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().skip(1).map(|s| s.parse::<f64>()).collect();
        let row = row.map_err(|e| Error::Input(format!("bad matrix value: {e}")))?;
        if row.len() != ids.len() {
            return Err(Error::Input("ragged matrix row".to_string()));
        }
        values.push(row);
    }
    if values.len() != ids.len() {
        return Err(Error::Input("matrix row count does not match header".to_string()));
    }
    Ok(DistanceMatrix { ids, values })
}
