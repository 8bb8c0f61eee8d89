//! Segmented Gaussian likelihood labeling: split the corridor into
//! along-axis segments, fit one mixture per segment, and map per-voyage
//! component signatures onto path-class labels.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cluster::{gmm_fit, gmm_log_likelihood, gmm_responsibilities, GaussianMixture, GmmOptions};
use crate::error::{Error, Result};
use crate::geo::{project, LocalPoint, Projection};
use crate::ingest::Voyage;

/// Version tag embedded in persisted model files.
pub const MODEL_FORMAT: &str = "pathclust-segment-model/1";

const SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// Along-axis partition of the corridor into `s` equal-width bins.
///
/// The axis runs between the two port centroids, canonicalized so the
/// western port is the origin; `boundaries` holds the `s + 1` bin edges in
/// meters of axis coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentScheme {
    pub origin: LocalPoint,
    /// Unit vector from the west port toward the east port.
    pub axis: [f64; 2],
    pub boundaries: Vec<f64>,
    pub s: usize,
}

impl SegmentScheme {
    /// Axis coordinate of a local point (meters from the west port,
    /// positive toward the east port).
    pub fn axis_coordinate(&self, p: LocalPoint) -> f64 {
        (p.x - self.origin.x) * self.axis[0] + (p.y - self.origin.y) * self.axis[1]
    }

    /// Segment index containing `p`, or `None` if it falls outside the
    /// boundary range. The final segment includes its upper edge.
    pub fn segment_of(&self, p: LocalPoint) -> Option<usize> {
        let t = self.axis_coordinate(p);
        let lo = self.boundaries[0];
        let hi = *self.boundaries.last().unwrap();
        if t < lo || t > hi {
            return None;
        }
        let idx = self
            .boundaries
            .windows(2)
            .position(|w| t >= w[0] && t < w[1])
            .unwrap_or(self.s - 1);
        Some(idx)
    }
}

/// Derive the port-to-port axis and equal-width segment boundaries from a
/// training set.
///
/// Port centroids are the means of every voyage's first and last projected
/// points, with each endpoint attributed to its nearer port so reversed
/// voyages produce the same scheme.
pub fn build_scheme(train: &[Voyage], s: usize, proj: &Projection) -> Result<SegmentScheme> {
    if s < 2 {
        return Err(Error::Parameter(format!("segment count must be >= 2, got {s}")));
    }
    if train.is_empty() {
        return Err(Error::Scheme("empty training set".to_string()));
    }
    let endpoints: Vec<(LocalPoint, LocalPoint)> = train
        .iter()
        .map(|v| {
            (
                project(v.points.first().unwrap().position, proj),
                project(v.points.last().unwrap().position, proj),
            )
        })
        .collect();

    // Two-centroid refinement over voyage endpoints, seeded with the first
    // voyage's pair; voyages may run in either direction.
    let (mut a, mut b) = endpoints[0];
    for _ in 0..16 {
        let (mut sa, mut sb) = ([0.0f64; 2], [0.0f64; 2]);
        let (mut na, mut nb) = (0usize, 0usize);
        let add = |port: &mut [f64; 2], n: &mut usize, p: LocalPoint| {
            port[0] += p.x;
            port[1] += p.y;
            *n += 1;
        };
        for &(first, last) in &endpoints {
            let d_direct = dist2(first, a) + dist2(last, b);
            let d_flipped = dist2(first, b) + dist2(last, a);
            let (to_a, to_b) = if d_direct <= d_flipped { (first, last) } else { (last, first) };
            add(&mut sa, &mut na, to_a);
            add(&mut sb, &mut nb, to_b);
        }
        if na == 0 || nb == 0 {
            break;
        }
        a = LocalPoint::new(sa[0] / na as f64, sa[1] / na as f64);
        b = LocalPoint::new(sb[0] / nb as f64, sb[1] / nb as f64);
    }

    // West port becomes the origin; ties broken south-first.
    let (origin, far) = if (a.x, a.y) <= (b.x, b.y) { (a, b) } else { (b, a) };
    let len = (dist2(origin, far)).sqrt();
    if len < 1.0 {
        return Err(Error::Scheme(format!("port centroids coincide (separation {len:.3} m)")));
    }
    let axis = [(far.x - origin.x) / len, (far.y - origin.y) / len];

    let mut partial = SegmentScheme {
        origin,
        axis,
        boundaries: vec![0.0, len],
        s,
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in train {
        for pt in &v.points {
            let t = partial.axis_coordinate(project(pt.position, proj));
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    if !(hi - lo).is_finite() || hi <= lo {
        return Err(Error::Scheme("training points project to a single axis coordinate".to_string()));
    }
    partial.boundaries = (0..=s)
        .map(|i| lo + (hi - lo) * i as f64 / s as f64)
        .collect();
    Ok(partial)
}

fn dist2(p: LocalPoint, q: LocalPoint) -> f64 {
    (p.x - q.x).powi(2) + (p.y - q.y).powi(2)
}

/// One fitted mixture per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentModels {
    pub scheme: SegmentScheme,
    pub models: Vec<GaussianMixture>,
    pub components_per_segment: usize,
    /// Projection the models were fitted in; classification reuses it.
    pub projection: Projection,
}

/// Minimum training points per segment, per mixture component.
pub const MIN_POINTS_PER_COMPONENT: usize = 10;

/// Fit one `components`-component mixture per segment on the projected
/// positions falling inside it.
pub fn fit_segment_models(
    train: &[Voyage],
    scheme: &SegmentScheme,
    components: usize,
    seed: u64,
    proj: &Projection,
) -> Result<SegmentModels> {
    let mut buckets: Vec<Vec<Vec<f64>>> = vec![Vec::new(); scheme.s];
    for v in train {
        for pt in &v.points {
            let p = project(pt.position, proj);
            if let Some(i) = scheme.segment_of(p) {
                buckets[i].push(vec![p.x, p.y]);
            }
        }
    }
    let required = components * MIN_POINTS_PER_COMPONENT;
    for (i, bucket) in buckets.iter().enumerate() {
        if bucket.len() < required {
            return Err(Error::SegmentCoverage {
                segment: i,
                points: bucket.len(),
                required,
            });
        }
    }
    let models = buckets
        .iter()
        .enumerate()
        .map(|(i, bucket)| {
            let segment_seed = seed ^ (i as u64 + 1).wrapping_mul(SEED_MIX);
            gmm_fit(bucket, components, segment_seed, GmmOptions::default())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentModels {
        scheme: scheme.clone(),
        models,
        components_per_segment: components,
        projection: *proj,
    })
}

/// Per-voyage tuple of segment component assignments; `None` marks a
/// segment the voyage never entered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSignature {
    pub voyage_id: String,
    pub assignments: Vec<Option<usize>>,
    pub mean_loglik: Vec<Option<f64>>,
    /// Mean of squared per-point log-likelihoods, for pooled-variance floors.
    pub mean_sq_loglik: Vec<Option<f64>>,
    /// Points falling in each segment.
    pub point_count: Vec<usize>,
}

/// Segment-wise component signature of one voyage: per segment, the argmax
/// of the mean per-point responsibility and the mean log-likelihood.
pub fn signature(v: &Voyage, models: &SegmentModels, proj: &Projection) -> PathSignature {
    let s = models.scheme.s;
    let mut resp_sums: Vec<Vec<f64>> = models
        .models
        .iter()
        .map(|m| vec![0.0; m.components.len()])
        .collect();
    let mut ll_sums = vec![0.0f64; s];
    let mut ll_sq_sums = vec![0.0f64; s];
    let mut counts = vec![0usize; s];
    for pt in &v.points {
        let p = project(pt.position, proj);
        if let Some(i) = models.scheme.segment_of(p) {
            let feat = [p.x, p.y];
            let resp = gmm_responsibilities(&models.models[i], &feat);
            for (acc, r) in resp_sums[i].iter_mut().zip(resp) {
                *acc += r;
            }
            let ll = gmm_log_likelihood(&models.models[i], &feat);
            ll_sums[i] += ll;
            ll_sq_sums[i] += ll * ll;
            counts[i] += 1;
        }
    }
    let mut assignments = Vec::with_capacity(s);
    let mut mean_loglik = Vec::with_capacity(s);
    let mut mean_sq_loglik = Vec::with_capacity(s);
    for i in 0..s {
        if counts[i] == 0 {
            assignments.push(None);
            mean_loglik.push(None);
            mean_sq_loglik.push(None);
        } else {
            let best = resp_sums[i]
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.total_cmp(b))
                .map(|(c, _)| c)
                .unwrap();
            assignments.push(Some(best));
            mean_loglik.push(Some(ll_sums[i] / counts[i] as f64));
            mean_sq_loglik.push(Some(ll_sq_sums[i] / counts[i] as f64));
        }
    }
    PathSignature {
        voyage_id: v.id.clone(),
        assignments,
        mean_loglik,
        mean_sq_loglik,
        point_count: counts,
    }
}

/// Learned mapping from discriminative-segment keys to class labels, plus
/// the per-segment likelihood floor for novelty flagging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureMap {
    /// Segments whose per-class majority assignments differ.
    pub discriminative: Vec<usize>,
    /// Sorted (key, label) pairs; keys are assignments restricted to the
    /// discriminative segments.
    pub entries: Vec<(Vec<Option<usize>>, String)>,
    /// Per segment: min training mean log-likelihood minus three pooled
    /// per-point standard deviations, or `None` when no training voyage
    /// covered the segment.
    pub floors: Vec<Option<f64>>,
}

impl SignatureMap {
    pub fn key_of(&self, sig: &PathSignature) -> Vec<Option<usize>> {
        self.discriminative.iter().map(|&i| sig.assignments[i]).collect()
    }

    fn lookup(&self, key: &[Option<usize>]) -> Option<&str> {
        self.entries
            .binary_search_by(|(k, _)| k.as_slice().cmp(key))
            .ok()
            .map(|i| self.entries[i].1.as_str())
    }
}

fn format_key(key: &[Option<usize>]) -> String {
    let parts: Vec<String> = key
        .iter()
        .map(|a| a.map(|c| c.to_string()).unwrap_or_else(|| "ABSENT".to_string()))
        .collect();
    parts.join(",")
}

/// Identify discriminative segments and learn the signature-to-class map
/// by majority vote among training voyages sharing each key.
pub fn learn_signature_map(signatures: &[PathSignature], labels: &[(String, String)]) -> Result<SignatureMap> {
    if signatures.is_empty() {
        return Err(Error::Input("no training signatures".to_string()));
    }
    let label_of: BTreeMap<&str, &str> = labels.iter().map(|(id, l)| (id.as_str(), l.as_str())).collect();
    for sig in signatures {
        if !label_of.contains_key(sig.voyage_id.as_str()) {
            return Err(Error::Input(format!("no label for voyage `{}`", sig.voyage_id)));
        }
    }
    let s = signatures[0].assignments.len();

    // Per (class, segment) majority assignment; a segment is
    // discriminative when the class majorities disagree.
    let mut per_class: BTreeMap<&str, Vec<BTreeMap<Option<usize>, usize>>> = BTreeMap::new();
    for sig in signatures {
        let class = label_of[sig.voyage_id.as_str()];
        let tallies = per_class.entry(class).or_insert_with(|| vec![BTreeMap::new(); s]);
        for (i, &a) in sig.assignments.iter().enumerate() {
            *tallies[i].entry(a).or_insert(0) += 1;
        }
    }
    let majority = |t: &BTreeMap<Option<usize>, usize>| -> Option<usize> {
        t.iter()
            .max_by_key(|&(k, &n)| (n, std::cmp::Reverse(*k)))
            .and_then(|(&k, _)| k)
    };
    let discriminative: Vec<usize> = (0..s)
        .filter(|&i| {
            let mut seen: Option<Option<usize>> = None;
            per_class.values().any(|tallies| {
                let m = majority(&tallies[i]);
                match seen {
                    None => {
                        seen = Some(m);
                        false
                    }
                    Some(prev) => prev != m,
                }
            })
        })
        .collect();

    // Majority class per key; ties are a hard error.
    let mut key_votes: BTreeMap<Vec<Option<usize>>, BTreeMap<&str, usize>> = BTreeMap::new();
    for sig in signatures {
        let key: Vec<Option<usize>> = discriminative.iter().map(|&i| sig.assignments[i]).collect();
        let class = label_of[sig.voyage_id.as_str()];
        *key_votes.entry(key).or_default().entry(class).or_insert(0) += 1;
    }
    let mut entries = Vec::with_capacity(key_votes.len());
    for (key, votes) in key_votes {
        let best = votes.values().max().copied().unwrap();
        let winners: Vec<&str> = votes
            .iter()
            .filter(|(_, &n)| n == best)
            .map(|(&c, _)| c)
            .collect();
        if winners.len() > 1 {
            return Err(Error::SignatureConflict(format_key(&key)));
        }
        entries.push((key, winners[0].to_string()));
    }

    // Floor = min training mean log-likelihood minus three standard
    // deviations of the per-point log-likelihood, pooled over all training
    // points in the segment. Pooling keeps the floor calibrated even for
    // segments where a class contributes a single training voyage.
    let mut floors = vec![None; s];
    for (i, floor) in floors.iter_mut().enumerate() {
        let mut min = f64::INFINITY;
        let mut sum = 0.0;
        let mut sq_sum = 0.0;
        let mut n = 0usize;
        for sig in signatures {
            if let (Some(m), Some(sq)) = (sig.mean_loglik[i], sig.mean_sq_loglik[i]) {
                let count = sig.point_count[i] as f64;
                min = min.min(m);
                sum += count * m;
                sq_sum += count * sq;
                n += sig.point_count[i];
            }
        }
        if n == 0 {
            continue;
        }
        let mean = sum / n as f64;
        let var = (sq_sum / n as f64 - mean * mean).max(0.0);
        *floor = Some(min - 3.0 * var.sqrt());
    }

    Ok(SignatureMap {
        discriminative,
        entries,
        floors,
    })
}

/// Outcome of classifying one voyage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub voyage_id: String,
    pub label: String,
    /// Mean of the per-segment mean log-likelihoods over covered segments.
    pub confidence: f64,
    /// True when the signature key was unseen and matched by Hamming
    /// distance instead of exactly.
    pub novel_adjacent: bool,
    /// True when any covered segment's mean log-likelihood fell below the
    /// training floor.
    pub below_floor: bool,
    pub mean_loglik: Vec<Option<f64>>,
}

fn hamming(a: &[Option<usize>], b: &[Option<usize>]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Label a voyage via the signature map: exact key match, or the
/// Hamming-nearest training key (flagged as novel-adjacent).
pub fn classify_voyage(
    v: &Voyage,
    models: &SegmentModels,
    map: &SignatureMap,
) -> Result<Classification> {
    let proj = models.projection;
    classify_signature(&signature(v, models, &proj), map)
}

/// Classification from an already-computed signature.
pub fn classify_signature(sig: &PathSignature, map: &SignatureMap) -> Result<Classification> {
    let key = map.key_of(sig);
    if key.iter().all(Option::is_none) {
        return Err(Error::Unclassifiable(sig.voyage_id.clone()));
    }
    let (label, novel_adjacent) = match map.lookup(&key) {
        Some(label) => (label.to_string(), false),
        None => {
            let best = map
                .entries
                .iter()
                .min_by(|(ka, la), (kb, lb)| {
                    hamming(&key, ka)
                        .cmp(&hamming(&key, kb))
                        .then_with(|| la.cmp(lb))
                        .then_with(|| ka.cmp(kb))
                })
                .expect("signature map has at least one entry");
            (best.1.clone(), true)
        }
    };
    let covered: Vec<f64> = sig.mean_loglik.iter().flatten().copied().collect();
    let confidence = if covered.is_empty() {
        f64::NEG_INFINITY
    } else {
        covered.iter().sum::<f64>() / covered.len() as f64
    };
    let below_floor = sig
        .mean_loglik
        .iter()
        .zip(&map.floors)
        .any(|(ll, floor)| matches!((ll, floor), (Some(l), Some(f)) if l < f));
    Ok(Classification {
        voyage_id: sig.voyage_id.clone(),
        label,
        confidence,
        novel_adjacent,
        below_floor,
        mean_loglik: sig.mean_loglik.clone(),
    })
}

/// Persisted model: scheme, per-segment mixtures, and the signature map,
/// wrapped with a format tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathModel {
    pub format: String,
    pub models: SegmentModels,
    pub map: SignatureMap,
}

impl PathModel {
    pub fn new(models: SegmentModels, map: SignatureMap) -> Self {
        PathModel {
            format: MODEL_FORMAT.to_string(),
            models,
            map,
        }
    }
}

pub fn write_model<W: Write>(writer: W, model: &PathModel) -> Result<()> {
    serde_json::to_writer_pretty(writer, model)?;
    Ok(())
}

pub fn read_model<R: Read>(reader: R) -> Result<PathModel> {
    let model: PathModel = serde_json::from_reader(reader)?;
    if model.format != MODEL_FORMAT {
        return Err(Error::Input(format!(
            "unsupported model format `{}` (expected `{MODEL_FORMAT}`)",
            model.format
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{make_projection, unproject, GeoPoint};
    use crate::ingest::VoyagePoint;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn base_projection() -> Projection {
        make_projection(GeoPoint::new(59.4, 18.3).unwrap()).unwrap()
    }

    /// Voyage along y = offset(x) for x in [0, 4000], one point per 10 m.
    fn corridor_voyage(id: &str, proj: &Projection, offset: impl Fn(f64) -> f64) -> Voyage {
        let points = (0..=400)
            .map(|i| {
                let x = i as f64 * 10.0;
                let pos = unproject(LocalPoint::new(x, offset(x)), proj);
                VoyagePoint {
                    timestamp: i,
                    position: pos,
                    fuel_rate: None,
                    speed: None,
                }
            })
            .collect();
        Voyage {
            id: id.to_string(),
            points,
        }
    }

    fn reversed(v: &Voyage) -> Voyage {
        let mut points: Vec<VoyagePoint> = v.points.iter().rev().cloned().collect();
        for (i, p) in points.iter_mut().enumerate() {
            p.timestamp = i as i64;
        }
        Voyage {
            id: format!("{}-rev", v.id),
            points,
        }
    }

    #[test]
    fn equal_split_two_segments() {
        let proj = base_projection();
        let v = corridor_voyage("v1", &proj, |_| 0.0);
        let scheme = build_scheme(&[v], 2, &proj).unwrap();
        assert_eq!(scheme.boundaries.len(), 3);
        let span = scheme.boundaries[2] - scheme.boundaries[0];
        assert_relative_eq!(
            scheme.boundaries[1] - scheme.boundaries[0],
            span / 2.0,
            max_relative = 1e-9
        );
        assert_relative_eq!(span, 4000.0, max_relative = 1e-6);
    }

    #[test]
    fn all_points_covered() {
        let proj = base_projection();
        let voyages: Vec<Voyage> = (0..4)
            .map(|i| corridor_voyage(&format!("v{i}"), &proj, move |x| 50.0 * i as f64 + 0.01 * x))
            .collect();
        let scheme = build_scheme(&voyages, 8, &proj).unwrap();
        for v in &voyages {
            for p in &v.points {
                assert!(scheme.segment_of(project(p.position, &proj)).is_some());
            }
        }
    }

    #[test]
    fn reversed_voyages_same_boundaries() {
        let proj = base_projection();
        let voyages: Vec<Voyage> = (0..3)
            .map(|i| corridor_voyage(&format!("v{i}"), &proj, move |_| 30.0 * i as f64))
            .collect();
        let rev: Vec<Voyage> = voyages.iter().map(reversed).collect();
        let fwd_scheme = build_scheme(&voyages, 8, &proj).unwrap();
        let rev_scheme = build_scheme(&rev, 8, &proj).unwrap();
        for (a, b) in fwd_scheme.boundaries.iter().zip(&rev_scheme.boundaries) {
            assert_relative_eq!(a, b, epsilon = 1e-6);
        }
        assert_relative_eq!(fwd_scheme.axis[0], rev_scheme.axis[0], epsilon = 1e-9);
    }

    #[test]
    fn coincident_ports_rejected() {
        let proj = base_projection();
        // Out-and-back: both endpoints at the origin.
        let points: Vec<VoyagePoint> = (0..=100)
            .map(|i| {
                let x = if i <= 50 { i as f64 * 10.0 } else { (100 - i) as f64 * 10.0 };
                VoyagePoint {
                    timestamp: i,
                    position: unproject(LocalPoint::new(x, 0.0), &proj),
                    fuel_rate: None,
                    speed: None,
                }
            })
            .collect();
        let v = Voyage { id: "loop".to_string(), points };
        assert!(matches!(build_scheme(&[v], 4, &proj), Err(Error::Scheme(_))));
    }

    #[test]
    fn segment_partition_is_exclusive() {
        let proj = base_projection();
        let v = corridor_voyage("v1", &proj, |_| 0.0);
        let scheme = build_scheme(std::slice::from_ref(&v), 8, &proj).unwrap();
        for p in &v.points {
            let local = project(p.position, &proj);
            let t = scheme.axis_coordinate(local);
            let by_scan: Vec<usize> = (0..scheme.s)
                .filter(|&i| {
                    let lo = scheme.boundaries[i];
                    let hi = scheme.boundaries[i + 1];
                    t >= lo && (t < hi || (i == scheme.s - 1 && t <= hi))
                })
                .collect();
            assert_eq!(by_scan.len(), 1);
            assert_eq!(scheme.segment_of(local), Some(by_scan[0]));
        }
        let outside = LocalPoint::new(-500.0, 0.0);
        assert_eq!(scheme.segment_of(outside), None);
    }

    /// Two-branch corridor: branch A along y=0, branch B forks to y=400
    /// in the second half.
    fn fork_fixture(proj: &Projection, per_branch: usize) -> (Vec<Voyage>, Vec<(String, String)>) {
        let mut voyages = Vec::new();
        let mut labels = Vec::new();
        for i in 0..per_branch {
            let wobble = (i as f64 - per_branch as f64 / 2.0) * 4.0;
            voyages.push(corridor_voyage(&format!("a{i}"), proj, move |_| wobble));
            labels.push((format!("a{i}"), "A".to_string()));
            voyages.push(corridor_voyage(&format!("b{i}"), proj, move |x| {
                wobble
                    + if x < 2000.0 {
                        0.0
                    } else {
                        ((x - 2000.0) / 1000.0).min(1.0) * 400.0
                    }
            }));
            labels.push((format!("b{i}"), "B".to_string()));
        }
        (voyages, labels)
    }

    #[test]
    fn fork_segment_separates_component_means() {
        let proj = base_projection();
        let (voyages, _) = fork_fixture(&proj, 6);
        let scheme = build_scheme(&voyages, 4, &proj).unwrap();
        let models = fit_segment_models(&voyages, &scheme, 2, 7, &proj).unwrap();
        // Last segment: branches are ~400 m apart across the fork.
        let last = &models.models[3];
        let spread = (last.components[0].mean[1] - last.components[1].mean[1]).abs();
        assert!(spread > 300.0, "fork means only {spread:.1} m apart");
        // First segment: single shared corridor, both means near y=0.
        for c in &models.models[0].components {
            assert!(c.mean[1].abs() < 60.0);
        }
    }

    #[test]
    fn undertrained_segment_is_coverage_error() {
        let proj = base_projection();
        let v = corridor_voyage("v1", &proj, |_| 0.0);
        let scheme = build_scheme(std::slice::from_ref(&v), 8, &proj).unwrap();
        // 401 points over 8 segments ≈ 50 per segment < 6*10 required.
        let err = fit_segment_models(&[v], &scheme, 6, 1, &proj).unwrap_err();
        assert!(matches!(err, Error::SegmentCoverage { required: 60, .. }));
    }

    #[test]
    fn deterministic_fit() {
        let proj = base_projection();
        let (voyages, _) = fork_fixture(&proj, 5);
        let scheme = build_scheme(&voyages, 4, &proj).unwrap();
        let m1 = fit_segment_models(&voyages, &scheme, 2, 42, &proj).unwrap();
        let m2 = fit_segment_models(&voyages, &scheme, 2, 42, &proj).unwrap();
        assert_eq!(m1, m2);
    }

    fn fitted_fork(proj: &Projection) -> (Vec<Voyage>, Vec<(String, String)>, SegmentModels, SignatureMap) {
        let (voyages, labels) = fork_fixture(proj, 8);
        let scheme = build_scheme(&voyages, 4, proj).unwrap();
        let models = fit_segment_models(&voyages, &scheme, 2, 11, proj).unwrap();
        let sigs: Vec<PathSignature> = voyages.iter().map(|v| signature(v, &models, proj)).collect();
        let map = learn_signature_map(&sigs, &labels).unwrap();
        (voyages, labels, models, map)
    }

    #[test]
    fn partial_voyage_has_absent_tail() {
        let proj = base_projection();
        let (voyages, _, models, _) = fitted_fork(&proj);
        let mut half = voyages[0].clone();
        half.points.truncate(half.points.len() / 2);
        let sig = signature(&half, &models, &proj);
        assert!(sig.assignments[0].is_some());
        assert!(sig.assignments[3].is_none());
        assert!(sig.mean_loglik[3].is_none());
    }

    #[test]
    fn training_voyages_reclassify_to_own_label() {
        let proj = base_projection();
        let (voyages, labels, models, map) = fitted_fork(&proj);
        for (v, (_, expected)) in voyages.iter().zip(&labels) {
            let sig = signature(v, &models, &proj);
            let c = classify_signature(&sig, &map).unwrap();
            assert_eq!(&c.label, expected, "voyage {}", v.id);
            assert!(!c.novel_adjacent);
        }
    }

    #[test]
    fn discriminative_segments_cover_the_fork_only() {
        let proj = base_projection();
        let (_, _, _, map) = fitted_fork(&proj);
        // Shared first half (segments 0-1) cannot discriminate.
        assert!(!map.discriminative.contains(&0));
        assert!(map.discriminative.contains(&3));
    }

    #[test]
    fn unseen_key_falls_back_by_hamming() {
        let proj = base_projection();
        let (voyages, _, models, map) = fitted_fork(&proj);
        // A branch-straddling voyage: follows A then jumps toward B late.
        let straddler = corridor_voyage("x0", &proj, |x| {
            if x < 3000.0 {
                0.0
            } else {
                ((x - 3000.0) / 500.0).min(1.0) * 400.0
            }
        });
        let sig = signature(&straddler, &models, &proj);
        let c = classify_signature(&sig, &map).unwrap();
        if map.lookup(&map.key_of(&sig)).is_none() {
            assert!(c.novel_adjacent);
        }
        // Either branch is acceptable; the label must come from training.
        assert!(c.label == "A" || c.label == "B");
        drop(voyages);
    }

    #[test]
    fn off_corridor_voyage_trips_the_floor() {
        let proj = base_projection();
        let (_, _, models, map) = fitted_fork(&proj);
        let rogue = corridor_voyage("r0", &proj, |_| -900.0);
        let sig = signature(&rogue, &models, &proj);
        let c = classify_signature(&sig, &map).unwrap();
        assert!(c.below_floor);
    }

    #[test]
    fn all_absent_is_unclassifiable() {
        let proj = base_projection();
        let (voyages, _, models, map) = fitted_fork(&proj);
        let mut sig = signature(&voyages[0], &models, &proj);
        for &i in &map.discriminative {
            sig.assignments[i] = None;
            sig.mean_loglik[i] = None;
        }
        assert!(matches!(classify_signature(&sig, &map), Err(Error::Unclassifiable(_))));
    }

    #[test]
    fn tied_majority_is_conflict_error() {
        let sig = |id: &str, seg1: usize| PathSignature {
            voyage_id: id.to_string(),
            assignments: vec![Some(0), Some(seg1)],
            mean_loglik: vec![Some(-1.0), Some(-1.0)],
            mean_sq_loglik: vec![Some(1.0), Some(1.0)],
            point_count: vec![1, 1],
        };
        // Segment 1 majorities differ across X and Y, so it is
        // discriminative, but key [Some(1)] collects one vote for each
        // class: a tie.
        let sigs = vec![sig("a", 1), sig("b", 0), sig("c", 1)];
        let labels = vec![
            ("a".to_string(), "X".to_string()),
            ("b".to_string(), "Y".to_string()),
            ("c".to_string(), "Y".to_string()),
        ];
        let err = learn_signature_map(&sigs, &labels).unwrap_err();
        assert!(matches!(err, Error::SignatureConflict(_)));
    }

    #[test]
    fn model_round_trip() {
        let proj = base_projection();
        let (_, _, mut models, map) = fitted_fork(&proj);
        // Fit diagnostics are not persisted.
        for m in &mut models.models {
            m.loglik_trace.clear();
        }
        let model = PathModel::new(models, map);
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn bad_format_tag_rejected() {
        let proj = base_projection();
        let (_, _, models, map) = fitted_fork(&proj);
        let mut model = PathModel::new(models, map);
        model.format = "something-else/9".to_string();
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        assert!(read_model(buf.as_slice()).is_err());
    }

    #[test]
    fn floor_is_min_minus_three_sigma() {
        // Voyage b carries two points with within-voyage variance 1;
        // a and c carry one point each.
        let cases = [(-2.0f64, 4.0, 1usize), (-3.0, 10.0, 2), (-4.0, 16.0, 1)];
        let sigs: Vec<PathSignature> = cases
            .iter()
            .enumerate()
            .map(|(i, &(ll, sq, n))| PathSignature {
                voyage_id: format!("v{i}"),
                assignments: vec![Some(i % 2)],
                mean_loglik: vec![Some(ll)],
                mean_sq_loglik: vec![Some(sq)],
                point_count: vec![n],
            })
            .collect();
        let labels: Vec<(String, String)> = (0..3)
            .map(|i| (format!("v{i}"), if i % 2 == 0 { "E" } else { "O" }.to_string()))
            .collect();
        let map = learn_signature_map(&sigs, &labels).unwrap();
        // Pooled over 4 points: mean -3, E[ll^2] = (4 + 2*10 + 16)/4 = 10,
        // variance 1; floor = min mean - 3*sigma = -4 - 3.
        assert_relative_eq!(map.floors[0].unwrap(), -7.0, epsilon = 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn signature_deterministic(offset in -100.0f64..100.0) {
            let proj = base_projection();
            let (voyages, _, models, _) = fitted_fork(&proj);
            let v = corridor_voyage("p", &proj, move |_| offset);
            let s1 = signature(&v, &models, &proj);
            let s2 = signature(&v, &models, &proj);
            prop_assert_eq!(s1, s2);
            drop(voyages);
        }

        #[test]
        fn weight_scaling_leaves_assignments_unchanged(scale in 0.1f64..10.0) {
            let proj = base_projection();
            let (voyages, _, models, _) = fitted_fork(&proj);
            let mut scaled = models.clone();
            for m in &mut scaled.models {
                for c in &mut m.components {
                    c.weight *= scale;
                }
                let total: f64 = m.components.iter().map(|c| c.weight).sum();
                for c in &mut m.components {
                    c.weight /= total;
                }
            }
            for v in voyages.iter().take(4) {
                let a = signature(v, &models, &proj);
                let b = signature(v, &scaled, &proj);
                prop_assert_eq!(a.assignments, b.assignments);
            }
        }
    }
}
