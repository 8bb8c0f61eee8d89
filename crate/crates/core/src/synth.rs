//! Synthetic voyage generator: two shared ports, five path classes with a
//! deliberately hard adjacent pair (NE/NM), standing in for real AIS data.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{make_projection, project, unproject, GeoPoint, LocalPoint, Projection};
use crate::ingest::{LabeledVoyage, Voyage, VoyagePoint};

/// Gap between the NE and NM centerlines at their closest fork approach.
pub const NE_NM_FORK_GAP_M: f64 = 60.0;

/// Correlation time of the mean-reverting lateral offset (seconds).
const LATERAL_TAU_S: f64 = 300.0;

/// Correlation time of the GPS error process (seconds). GPS error is
/// modeled as slowly wandering rather than independent per fix: receiver
/// error is dominated by atmospheric and multipath terms that persist for
/// minutes, and independent noise would also inflate the along-track
/// length (and hence measured speed) far beyond the nominal speed.
const GPS_TAU_S: f64 = 180.0;

const SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Epoch base for generated timestamps (2024-01-01T00:00:00Z).
const TIME_BASE: i64 = 1_704_067_200;

/// One path class: a fixed centerline plus the spread of vessels around it.
///
/// A class may carry a secondary centerline for boundary traffic — vessels
/// that belong to the class but commit less deeply to its branch. The last
/// `secondary_count` voyages of the class walk the secondary line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteArchetype {
    pub class_label: String,
    /// Polyline from the west port to the east port.
    pub centerline: Vec<GeoPoint>,
    /// Meters per second along the centerline.
    pub nominal_speed: f64,
    /// Stationary sigma of the lateral offset process, meters.
    pub lateral_sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_centerline: Option<Vec<GeoPoint>>,
    #[serde(default)]
    pub secondary_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub archetypes: Vec<RouteArchetype>,
    pub counts: BTreeMap<String, usize>,
    /// Seconds between consecutive fixes.
    pub sample_period: u64,
    /// Stationary sigma of the GPS error process, meters.
    pub gps_noise_sigma: f64,
    pub seed: u64,
}

/// Route length between the ports, meters of easting.
pub const ROUTE_LEN_M: f64 = 4000.0;

/// West port; the east port lies `ROUTE_LEN_M` due east.
fn west_port() -> GeoPoint {
    GeoPoint::new(59.40, 18.10).unwrap()
}

fn base_projection() -> Projection {
    make_projection(west_port()).unwrap()
}

/// Build a centerline from (route fraction, offset north in meters) knots.
fn centerline(profile: &[(f64, f64)]) -> Vec<GeoPoint> {
    let proj = base_projection();
    profile
        .iter()
        .map(|&(f, y)| unproject(LocalPoint::new(f * ROUTE_LEN_M, y), &proj))
        .collect()
}

/// The five class profiles. The north trunk (NM) rises to 840 m; NE hugs
/// it until forking east of mid-route, approaching to exactly
/// [`NE_NM_FORK_GAP_M`] before opening up — the hard pair. NW forks high
/// on the west half; S runs a shallow southern line; SW digs south
/// mid-route. Southern routes are shorter than northern ones.
fn trunk_height(f: f64) -> f64 {
    if f < 0.15 {
        840.0 * f / 0.15
    } else if f <= 0.85 {
        840.0
    } else {
        840.0 * (1.0 - f) / 0.15
    }
}

/// Depth of the NE branch's eastern excursion above the trunk, meters.
const NE_DEPTH_M: f64 = 720.0;

/// Excursion depth of NE boundary traffic (vessels that cut the corner and
/// stay closer to the trunk), and how many of the NE voyages do so.
const NE_SECONDARY_DEPTH_M: f64 = 375.0;
const NE_SECONDARY_COUNT: usize = 3;

/// NE-shaped profile with the eastern excursion scaled to `depth`; the fork
/// approach plateau keeps the same proportion to the excursion.
fn ne_profile(depth: f64) -> Vec<(f64, f64)> {
    let gap = NE_NM_FORK_GAP_M * depth / NE_DEPTH_M;
    vec![
        (0.0, 0.0),
        (0.15, 840.0),
        (0.65, 840.0),
        (0.70, 840.0 + gap),
        (0.75, 840.0 + gap),
        (0.8125, 840.0 + depth),
        (0.85, 840.0 + depth),
        (0.9375, trunk_height(0.9375) + depth),
        (1.0, 0.0),
    ]
}

fn class_profiles() -> Vec<(&'static str, Vec<(f64, f64)>)> {
    let trunk = trunk_height;
    let nm = vec![(0.0, 0.0), (0.15, 840.0), (0.85, 840.0), (1.0, 0.0)];
    let ne = ne_profile(NE_DEPTH_M);
    let nw: Vec<(f64, f64)> = vec![
        (0.0, 0.0),
        (0.125, trunk(0.125)),
        (0.15, 840.0 + 400.0),
        (0.1875, 840.0 + 1000.0),
        (0.3125, 840.0 + 1000.0),
        (0.375, 840.0),
        (0.85, 840.0),
        (1.0, 0.0),
    ];
    let s = vec![(0.0, 0.0), (0.1, -200.0), (0.9, -200.0), (1.0, 0.0)];
    let sw = vec![
        (0.0, 0.0),
        (0.1, -200.0),
        (0.3125, -200.0),
        (0.40625, -800.0),
        (0.59375, -800.0),
        (0.6875, -200.0),
        (0.9, -200.0),
        (1.0, 0.0),
    ];
    vec![("NE", ne), ("NM", nm), ("NW", nw), ("S", s), ("SW", sw)]
}

/// A sixth corridor between the north trunk and the southern line, used
/// only for novelty tests; never labeled.
fn novel_profile() -> Vec<(f64, f64)> {
    vec![(0.0, 0.0), (0.15, 320.0), (0.85, 320.0), (1.0, 0.0)]
}

/// Two-port, five-class scenario: counts from the reference traffic
/// distribution (124 voyages total), 4.2 m/s nominal speed, 1 Hz sampling.
pub fn default_config() -> GeneratorConfig {
    let archetypes = class_profiles()
        .into_iter()
        .map(|(label, profile)| RouteArchetype {
            class_label: label.to_string(),
            centerline: centerline(&profile),
            nominal_speed: 4.2,
            lateral_sigma: 10.0,
            secondary_centerline: (label == "NE")
                .then(|| centerline(&ne_profile(NE_SECONDARY_DEPTH_M))),
            secondary_count: if label == "NE" { NE_SECONDARY_COUNT } else { 0 },
        })
        .collect();
    let counts = [("NE", 14), ("NM", 40), ("NW", 16), ("S", 52), ("SW", 2)]
        .into_iter()
        .map(|(l, n)| (l.to_string(), n))
        .collect();
    GeneratorConfig {
        archetypes,
        counts,
        sample_period: 1,
        gps_noise_sigma: 5.0,
        seed: 1,
    }
}

fn validate(config: &GeneratorConfig) -> Result<()> {
    if config.archetypes.is_empty() {
        return Err(Error::Parameter("no archetypes".to_string()));
    }
    if config.sample_period < 1 {
        return Err(Error::Parameter("sample_period must be >= 1 s".to_string()));
    }
    if config.gps_noise_sigma.is_nan() || config.gps_noise_sigma < 0.0 {
        return Err(Error::Parameter("gps_noise_sigma must be >= 0".to_string()));
    }
    let first = &config.archetypes[0];
    for a in &config.archetypes {
        if a.centerline.len() < 2 {
            return Err(Error::Parameter(format!("archetype {} centerline too short", a.class_label)));
        }
        if a.lateral_sigma.is_nan() || a.lateral_sigma < 0.0 || a.nominal_speed.is_nan() || a.nominal_speed <= 0.0 {
            return Err(Error::Parameter(format!("archetype {} has invalid sigma/speed", a.class_label)));
        }
        if a.centerline.first() != first.centerline.first()
            || a.centerline.last() != first.centerline.last()
        {
            return Err(Error::Parameter(format!(
                "archetype {} does not share the common ports",
                a.class_label
            )));
        }
        if let Some(secondary) = &a.secondary_centerline {
            if secondary.len() < 2
                || secondary.first() != first.centerline.first()
                || secondary.last() != first.centerline.last()
            {
                return Err(Error::Parameter(format!(
                    "archetype {} secondary centerline does not share the common ports",
                    a.class_label
                )));
            }
        } else if a.secondary_count > 0 {
            return Err(Error::Parameter(format!(
                "archetype {} has secondary_count without a secondary centerline",
                a.class_label
            )));
        }
    }
    for (label, &n) in &config.counts {
        if n < 1 {
            return Err(Error::Parameter(format!("count for class {label} must be >= 1")));
        }
        if !config.archetypes.iter().any(|a| &a.class_label == label) {
            return Err(Error::Parameter(format!("count for unknown class {label}")));
        }
    }
    Ok(())
}

/// Arc-length parameterized polyline in local coordinates.
struct ParamPolyline {
    vertices: Vec<LocalPoint>,
    /// Cumulative arc length at each vertex.
    cum: Vec<f64>,
}

impl ParamPolyline {
    fn new(line: &[GeoPoint], proj: &Projection) -> Self {
        let vertices: Vec<LocalPoint> = line.iter().map(|&g| project(g, proj)).collect();
        let mut cum = Vec::with_capacity(vertices.len());
        let mut total = 0.0;
        cum.push(0.0);
        for w in vertices.windows(2) {
            total += ((w[1].x - w[0].x).powi(2) + (w[1].y - w[0].y).powi(2)).sqrt();
            cum.push(total);
        }
        ParamPolyline { vertices, cum }
    }

    fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Position and unit left-hand normal at arc length `s` (clamped).
    fn at(&self, s: f64) -> (LocalPoint, [f64; 2]) {
        let s = s.clamp(0.0, self.length());
        let i = match self.cum.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.vertices.len() - 2),
            Err(i) => i - 1,
        };
        let seg_len = (self.cum[i + 1] - self.cum[i]).max(1e-12);
        let t = (s - self.cum[i]) / seg_len;
        let (a, b) = (self.vertices[i], self.vertices[i + 1]);
        let pos = LocalPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
        let (ux, uy) = ((b.x - a.x) / seg_len, (b.y - a.y) / seg_len);
        (pos, [-uy, ux])
    }
}

/// Discrete Ornstein–Uhlenbeck process with stationary sigma and
/// correlation time in units of the step interval.
struct Ou {
    value: f64,
    decay: f64,
    step_sigma: f64,
}

impl Ou {
    fn new(sigma: f64, tau_steps: f64, rng: &mut ChaCha8Rng) -> Self {
        let decay = (-1.0 / tau_steps).exp();
        let z: f64 = rng.sample(StandardNormal);
        Ou {
            value: sigma * z,
            decay,
            step_sigma: sigma * (1.0 - decay * decay).sqrt(),
        }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.value = self.value * self.decay + self.step_sigma * z;
        self.value
    }
}

fn voyage_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (index + 1).wrapping_mul(SEED_MIX))
}

fn walk(
    id: String,
    arch: &RouteArchetype,
    config: &GeneratorConfig,
    proj: &Projection,
    rng: &mut ChaCha8Rng,
    t0: i64,
) -> Voyage {
    let line = ParamPolyline::new(&arch.centerline, proj);
    let dt = config.sample_period as f64;
    let tau_scale = 1.0 / dt;
    let mut lateral = Ou::new(arch.lateral_sigma, LATERAL_TAU_S * tau_scale, rng);
    let mut gps_x = Ou::new(config.gps_noise_sigma, GPS_TAU_S * tau_scale, rng);
    let mut gps_y = Ou::new(config.gps_noise_sigma, GPS_TAU_S * tau_scale, rng);
    let fuel_base = 26.0 + 6.0 * rng.random::<f64>();
    let steps = (line.length() / (arch.nominal_speed * dt)).ceil() as i64;
    let mut points = Vec::with_capacity(steps as usize + 1);
    for k in 0..=steps {
        let s = (k as f64 * dt * arch.nominal_speed).min(line.length());
        let (pos, normal) = line.at(s);
        let off = lateral.step(rng);
        let (ex, ey) = (gps_x.step(rng), gps_y.step(rng));
        let p = LocalPoint::new(pos.x + off * normal[0] + ex, pos.y + off * normal[1] + ey);
        let fuel_jitter: f64 = rng.sample(StandardNormal);
        let speed_jitter: f64 = rng.sample(StandardNormal);
        points.push(VoyagePoint {
            timestamp: t0 + k * config.sample_period as i64,
            position: unproject(p, proj),
            fuel_rate: Some(fuel_base + 0.4 * fuel_jitter),
            speed: Some(arch.nominal_speed + 0.1 * speed_jitter),
        });
    }
    Voyage { id, points }
}

/// Generate the labeled fleet: `counts[class]` voyages per archetype,
/// deterministic for a fixed seed and independent of thread count.
pub fn generate(config: &GeneratorConfig) -> Result<Vec<LabeledVoyage>> {
    validate(config)?;
    let proj = make_projection(config.archetypes[0].centerline[0])?;
    let mut jobs = Vec::new();
    let mut index = 0u64;
    for arch in &config.archetypes {
        let n = config.counts.get(&arch.class_label).copied().unwrap_or(0);
        for i in 0..n {
            let id = format!("{}-{:03}", arch.class_label, i);
            // The last `secondary_count` voyages of the class walk the
            // secondary (boundary-traffic) centerline if one is defined.
            let secondary = arch.secondary_centerline.is_some() && i + arch.secondary_count >= n;
            jobs.push((index, id, arch, secondary));
            index += 1;
        }
    }
    let voyages: Vec<LabeledVoyage> = jobs
        .par_iter()
        .map(|(idx, id, arch, secondary)| {
            let mut rng = voyage_rng(config.seed, *idx);
            let t0 = TIME_BASE + *idx as i64 * 7200;
            let mut effective = (*arch).clone();
            if *secondary {
                effective.centerline = arch.secondary_centerline.clone().unwrap();
            }
            LabeledVoyage {
                voyage: walk(id.clone(), &effective, config, &proj, &mut rng, t0),
                class_label: arch.class_label.clone(),
            }
        })
        .collect();
    Ok(voyages)
}

/// Voyages on an unlabeled sixth corridor, well away from every archetype,
/// for novelty-handling tests.
pub fn generate_novel(config: &GeneratorConfig, count: usize) -> Result<Vec<Voyage>> {
    validate(config)?;
    let proj = make_projection(config.archetypes[0].centerline[0])?;
    let speed = config.archetypes[0].nominal_speed;
    let sigma = config.archetypes[0].lateral_sigma;
    let arch = RouteArchetype {
        class_label: "NOVEL".to_string(),
        centerline: centerline(&novel_profile()),
        nominal_speed: speed,
        lateral_sigma: sigma,
        secondary_centerline: None,
        secondary_count: 0,
    };
    const NOVEL_OFFSET: u64 = 1 << 32;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = voyage_rng(config.seed, NOVEL_OFFSET + i);
            let t0 = TIME_BASE + (NOVEL_OFFSET + i) as i64;
            walk(format!("NOV-{i:03}"), &arch, config, &proj, &mut rng, t0)
        })
        .collect())
}

/// Deterministic stratified split: `train_fraction` of each class (rounded
/// up, at least 1) goes to the first list, the rest to the second.
pub fn stratified_split(
    voyages: &[LabeledVoyage],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<LabeledVoyage>, Vec<LabeledVoyage>)> {
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<&LabeledVoyage>> = BTreeMap::new();
    for v in voyages {
        by_class.entry(v.class_label.as_str()).or_default().push(v);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (_, mut members) in by_class {
        // Fisher-Yates on the per-class slice.
        for i in (1..members.len()).rev() {
            let j = rng.random_range(0..=i);
            members.swap(i, j);
        }
        let n_train = ((members.len() as f64 * train_fraction).ceil() as usize)
            .clamp(1, members.len().saturating_sub(1).max(1));
        for (i, v) in members.into_iter().enumerate() {
            if i < n_train {
                train.push(v.clone());
            } else {
                test.push(v.clone());
            }
        }
    }
    Ok((train, test))
}

pub fn read_config<R: Read>(reader: R) -> Result<GeneratorConfig> {
    let config = serde_json::from_reader(reader)?;
    validate(&config)?;
    Ok(config)
}

pub fn write_config<W: Write>(writer: W, config: &GeneratorConfig) -> Result<()> {
    serde_json::to_writer_pretty(writer, config)?;
    Ok(())
}
