//! Gaussian mixture fitting by expectation-maximization.
//!
//! Full covariances with a regularization floor tied to the data variance,
//! k-means++ initialization of the means, and a multi-restart search by
//! final log-likelihood. Log-densities go through log-sum-exp throughout.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annd::DistanceMatrix;
use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093456;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major symmetric covariance.
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    pub components: Vec<GmmComponent>,
    /// Mean log-likelihood per training point after each EM iteration of the
    /// winning restart.
    #[serde(skip)]
    pub loglik_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct GmmOptions {
    pub restarts: usize,
    pub max_iters: usize,
    /// Absolute per-point log-likelihood improvement below which EM stops.
    pub tol: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            restarts: 5,
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

impl GaussianMixture {
    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }
}

struct Component {
    weight: f64,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: DVector<f64>, mut cov: DMatrix<f64>, reg: f64) -> Self {
        let d = mean.len();
        for i in 0..d {
            cov[(i, i)] += reg;
        }
        // Escalate the diagonal load until the factorization succeeds.
        let mut load = reg.max(1e-12);
        let chol = loop {
            if let Some(c) = Cholesky::new(cov.clone()) {
                break c;
            }
            for i in 0..d {
                cov[(i, i)] += load;
            }
            load *= 10.0;
        };
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let log_norm = -0.5 * (d as f64 * LN_2PI + log_det);
        Component {
            weight,
            mean,
            cov,
            chol,
            log_norm,
        }
    }

    fn log_density(&self, x: &DVector<f64>) -> f64 {
        let mut diff = x.clone();
        let mut solved = x.clone();
        self.log_density_into(x, &mut diff, &mut solved)
    }

    /// `log_density` with caller-provided scratch vectors; the EM loop is
    /// allocation-free on its hot path.
    fn log_density_into(&self, x: &DVector<f64>, diff: &mut DVector<f64>, solved: &mut DVector<f64>) -> f64 {
        diff.copy_from(x);
        *diff -= &self.mean;
        solved.copy_from(diff);
        self.chol.solve_mut(solved);
        self.log_norm - 0.5 * diff.dot(solved)
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn data_covariance(points: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = points.len() as f64;
    let d = points[0].len();
    let mut mean = DVector::zeros(d);
    for p in points {
        mean += p;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for p in points {
        let diff = p - &mean;
        cov += &diff * diff.transpose();
    }
    cov /= n;
    (mean, cov)
}

fn sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm_squared()
}

fn plus_plus_means(points: &[DVector<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n = points.len();
    let mut means = vec![points[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &means[0])).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..n)
        } else {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        means.push(points[next].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, means.last().unwrap()));
        }
    }
    means
}

struct EmRun {
    components: Vec<Component>,
    trace: Vec<f64>,
    final_ll: f64,
}

fn em_run(
    points: &[DVector<f64>],
    k: usize,
    reg: f64,
    init_means: Vec<DVector<f64>>,
    init_cov: &DMatrix<f64>,
    opts: GmmOptions,
) -> EmRun {
    let n = points.len();
    let d = points[0].len();
    let mut components: Vec<Component> = init_means
        .into_iter()
        .map(|m| Component::new(1.0 / k as f64, m, init_cov.clone(), reg))
        .collect();
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    let mut resp = vec![vec![0.0f64; k]; n];
    let mut diff = DVector::zeros(d);
    let mut solved = DVector::zeros(d);
    let mut logp = vec![0.0f64; k];
    let mut log_w = vec![0.0f64; k];

    for _ in 0..opts.max_iters {
        // E step
        let mut total_ll = 0.0;
        for (c, comp) in components.iter().enumerate() {
            log_w[c] = comp.weight.ln();
        }
        for (i, p) in points.iter().enumerate() {
            for (c, comp) in components.iter().enumerate() {
                logp[c] = log_w[c] + comp.log_density_into(p, &mut diff, &mut solved);
            }
            let lse = log_sum_exp(&logp);
            total_ll += lse;
            for c in 0..k {
                resp[i][c] = (logp[c] - lse).exp();
            }
        }
        let ll = total_ll / n as f64;
        trace.push(ll);

        // M step
        for c in 0..k {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            if nk <= f64::MIN_POSITIVE {
                continue; // starved component keeps its parameters
            }
            let mut mean = DVector::zeros(d);
            for (p, r) in points.iter().zip(&resp) {
                mean.axpy(r[c], p, 1.0);
            }
            mean /= nk;
            let mut cov = DMatrix::zeros(d, d);
            for (p, r) in points.iter().zip(&resp) {
                diff.copy_from(p);
                diff -= &mean;
                cov.ger(r[c], &diff, &diff, 1.0);
            }
            cov /= nk;
            components[c] = Component::new(nk / n as f64, mean, cov, reg);
        }
        // renormalize weights in case a component starved
        let wsum: f64 = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= wsum;
        }

        if (ll - prev_ll).abs() < opts.tol {
            prev_ll = ll;
            break;
        }
        prev_ll = ll;
    }
    EmRun {
        components,
        trace,
        final_ll: prev_ll,
    }
}

fn to_vectors(points: &[Vec<f64>]) -> Vec<DVector<f64>> {
    points.iter().map(|p| DVector::from_column_slice(p)).collect()
}

/// Fits a mixture of `n_components` full-covariance Gaussians to `points`.
pub fn gmm_fit(points: &[Vec<f64>], n_components: usize, seed: u64, opts: GmmOptions) -> Result<GaussianMixture> {
    if points.is_empty() || n_components == 0 {
        return Err(Error::GmmFit("empty input or zero components".to_string()));
    }
    let mut distinct: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !distinct.contains(&p) {
            distinct.push(p);
            if distinct.len() >= n_components {
                break;
            }
        }
    }
    if distinct.len() < n_components {
        return Err(Error::GmmFit(format!(
            "need at least {n_components} distinct points, found {}",
            distinct.len()
        )));
    }
    let pts = to_vectors(points);
    let d = pts[0].len();
    if pts.iter().any(|p| p.len() != d) {
        return Err(Error::GmmFit("inconsistent point dimensionality".to_string()));
    }
    let (_, cov) = data_covariance(&pts);
    let reg = 1e-6 * (cov.trace() / d as f64).max(f64::MIN_POSITIVE);

    let runs: Vec<(usize, EmRun)> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(
                seed.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(r as u64),
            );
            let means = plus_plus_means(&pts, n_components, &mut rng);
            (r, em_run(&pts, n_components, reg, means, &cov, opts))
        })
        .collect();
    let best = runs
        .into_iter()
        .max_by(|(ra, a), (rb, b)| a.final_ll.total_cmp(&b.final_ll).then(rb.cmp(ra)))
        .map(|(_, r)| r)
        .unwrap();

    Ok(GaussianMixture {
        components: best
            .components
            .iter()
            .map(|c| GmmComponent {
                weight: c.weight,
                mean: c.mean.iter().cloned().collect(),
                covariance: (0..d)
                    .map(|i| (0..d).map(|j| c.cov[(i, j)]).collect())
                    .collect(),
            })
            .collect(),
        loglik_trace: best.trace,
    })
}

fn rebuild(g: &GaussianMixture) -> Vec<Component> {
    g.components
        .iter()
        .map(|c| {
            let d = c.mean.len();
            let mean = DVector::from_column_slice(&c.mean);
            let cov = DMatrix::from_fn(d, d, |i, j| c.covariance[i][j]);
            Component::new(c.weight, mean, cov, 0.0)
        })
        .collect()
}

/// Log mixture density at `p`, computed stably via log-sum-exp.
pub fn gmm_log_likelihood(g: &GaussianMixture, p: &[f64]) -> f64 {
    let x = DVector::from_column_slice(p);
    let logps: Vec<f64> = rebuild(g)
        .iter()
        .map(|c| c.weight.ln() + c.log_density(&x))
        .collect();
    log_sum_exp(&logps)
}

/// Posterior component responsibilities at `p`; sums to 1.
pub fn gmm_responsibilities(g: &GaussianMixture, p: &[f64]) -> Vec<f64> {
    let x = DVector::from_column_slice(p);
    let logps: Vec<f64> = rebuild(g)
        .iter()
        .map(|c| c.weight.ln() + c.log_density(&x))
        .collect();
    let lse = log_sum_exp(&logps);
    logps.iter().map(|lp| (lp - lse).exp()).collect()
}

/// Fits a mixture on distance-matrix rows and assigns each path to its
/// argmax-responsibility component (ties to the lowest component index).
pub fn gmm_cluster(matrix: &DistanceMatrix, k: usize, seed: u64, opts: GmmOptions) -> Result<ClusterAssignment> {
    let g = gmm_fit(&matrix.values, k, seed, opts)?;
    let raw: Vec<usize> = matrix
        .values
        .iter()
        .map(|row| {
            let resp = gmm_responsibilities(&g, row);
            resp.iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |best, (i, &r)| {
                    if r > best.1 {
                        (i, r)
                    } else {
                        best
                    }
                })
                .0
        })
        .collect();
    Ok(ClusterAssignment::from_raw(matrix.ids.clone(), &raw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn opts() -> GmmOptions {
        GmmOptions::default()
    }

    fn two_clouds(seed: u64) -> (Vec<Vec<f64>>, usize) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for _ in 0..150 {
            pts.push(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        }
        for _ in 0..50 {
            pts.push(vec![
                40.0 + rng.random_range(-1.0..1.0),
                40.0 + rng.random_range(-1.0..1.0),
            ]);
        }
        (pts, 150)
    }

    #[test]
    fn single_component_is_sample_mle() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
        ];
        let g = gmm_fit(&pts, 1, 1, opts()).unwrap();
        assert_relative_eq!(g.components[0].mean[0], 1.0, epsilon = 1e-9);
        assert_relative_eq!(g.components[0].mean[1], 1.0, epsilon = 1e-9);
        // sample covariance is diag(1, 1) plus the regularization floor
        assert_relative_eq!(g.components[0].covariance[0][0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(g.components[0].covariance[0][1], 0.0, epsilon = 1e-9);
        assert_relative_eq!(g.components[0].weight, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn two_far_clouds_recovered() {
        let (pts, n_first) = two_clouds(5);
        let g = gmm_fit(&pts, 2, 9, opts()).unwrap();
        let mut comps = g.components.clone();
        comps.sort_by(|a, b| a.mean[0].total_cmp(&b.mean[0]));
        assert!(comps[0].mean[0].abs() < 0.5 && comps[0].mean[1].abs() < 0.5);
        assert!((comps[1].mean[0] - 40.0).abs() < 0.5);
        let expected = n_first as f64 / pts.len() as f64;
        assert!((comps[0].weight - expected).abs() < 0.02);
        assert!((comps[1].weight - (1.0 - expected)).abs() < 0.02);
    }

    #[test]
    fn loglik_trace_nondecreasing() {
        let (pts, _) = two_clouds(17);
        let g = gmm_fit(&pts, 3, 23, opts()).unwrap();
        for w in g.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "EM log-likelihood decreased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn peak_log_density_standard_normal_2d() {
        let g = GaussianMixture {
            components: vec![GmmComponent {
                weight: 1.0,
                mean: vec![0.0, 0.0],
                covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            }],
            loglik_trace: vec![],
        };
        let ll = gmm_log_likelihood(&g, &[0.0, 0.0]);
        assert_relative_eq!(ll, (1.0 / (2.0 * std::f64::consts::PI)).ln(), epsilon = 1e-12);
    }

    #[test]
    fn equal_identical_components_collapse() {
        let comp = GmmComponent {
            weight: 0.5,
            mean: vec![1.0, -1.0],
            covariance: vec![vec![2.0, 0.3], vec![0.3, 1.0]],
        };
        let two = GaussianMixture {
            components: vec![comp.clone(), comp.clone()],
            loglik_trace: vec![],
        };
        let one = GaussianMixture {
            components: vec![GmmComponent {
                weight: 1.0,
                ..comp
            }],
            loglik_trace: vec![],
        };
        let p = [0.3, 0.7];
        assert_relative_eq!(gmm_log_likelihood(&two, &p), gmm_log_likelihood(&one, &p), epsilon = 1e-12);
    }

    /// Naive direct-summation oracle for the mixture density.
    fn naive_log_density(g: &GaussianMixture, p: &[f64]) -> f64 {
        let d = p.len();
        let mut total = 0.0;
        for c in &g.components {
            let cov = DMatrix::from_fn(d, d, |i, j| c.covariance[i][j]);
            let det = cov.determinant();
            let inv = cov.try_inverse().unwrap();
            let diff = DVector::from_column_slice(p) - DVector::from_column_slice(&c.mean);
            let quad = (diff.transpose() * inv * &diff)[(0, 0)];
            let norm = 1.0 / ((2.0 * std::f64::consts::PI).powi(d as i32) * det).sqrt();
            total += c.weight * norm * (-0.5 * quad).exp();
        }
        total.ln()
    }

    #[test]
    fn log_likelihood_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = GaussianMixture {
            components: (0..3)
                .map(|_| {
                    let a: f64 = rng.random_range(0.5..2.0);
                    let b: f64 = rng.random_range(-0.3..0.3);
                    let c: f64 = rng.random_range(0.5..2.0);
                    GmmComponent {
                        weight: 1.0 / 3.0,
                        mean: vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
                        // a, c dominate b so the matrix stays positive-definite
                        covariance: vec![vec![a, b], vec![b, c]],
                    }
                })
                .collect(),
            loglik_trace: vec![],
        };
        for _ in 0..20 {
            let p = [rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0)];
            let fast = gmm_log_likelihood(&g, &p);
            let slow = naive_log_density(&g, &p);
            assert_relative_eq!(fast, slow, max_relative = 1e-12);
        }
    }

    #[test]
    fn responsibilities_sum_to_one() {
        let (pts, _) = two_clouds(41);
        let g = gmm_fit(&pts, 2, 3, opts()).unwrap();
        for p in pts.iter().take(50) {
            let sum: f64 = gmm_responsibilities(&g, p).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_distinct_points_rejected() {
        let pts = vec![vec![1.0, 1.0]; 10];
        assert!(matches!(gmm_fit(&pts, 2, 1, opts()), Err(Error::GmmFit(_))));
    }

    #[test]
    fn weights_sum_to_one() {
        let (pts, _) = two_clouds(51);
        let g = gmm_fit(&pts, 3, 13, opts()).unwrap();
        let sum: f64 = g.components.iter().map(|c| c.weight).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gmm_cluster_recovers_separated_rows() {
        let mut values: Vec<Vec<f64>> = Vec::new();
        let mut ids = Vec::new();
        for i in 0..6 {
            let base = if i < 3 { 0.0 } else { 100.0 };
            values.push(vec![base + i as f64 * 0.01, base, base]);
            ids.push(format!("v{i}"));
        }
        let matrix = DistanceMatrix { ids, values };
        let a = gmm_cluster(&matrix, 2, 7, opts()).unwrap();
        assert_eq!(a.k, 2);
        assert_eq!(a.labels[0], a.labels[1]);
        assert_eq!(a.labels[0], a.labels[2]);
        assert_eq!(a.labels[3], a.labels[4]);
        assert_ne!(a.labels[0], a.labels[3]);
        let b = gmm_cluster(&matrix, 2, 7, opts()).unwrap();
        assert_eq!(a, b);
    }
}
