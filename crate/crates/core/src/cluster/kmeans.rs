//! Lloyd's k-means with k-means++ initialization and multi-restart search.
//!
//! Restarts are seeded independently from the master seed by restart index,
//! so running them serially or in parallel yields identical results.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::annd::DistanceMatrix;
use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iters: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            restarts: 10,
            max_iters: 300,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub wcss: f64,
    /// Within-cluster sum of squares after each Lloyd iteration of the
    /// winning restart.
    pub wcss_trace: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus_init(features: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = features.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(features[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = features.iter().map(|f| sq_dist(f, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining mass at already-chosen points: pick uniformly
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
        centers.push(features[next].clone());
        for (i, f) in features.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(f, centers.last().unwrap()));
        }
    }
    centers
}

fn lloyd(features: &[Vec<f64>], k: usize, mut centers: Vec<Vec<f64>>, max_iters: usize) -> KMeansResult {
    let n = features.len();
    let d = features[0].len();
    let mut labels = vec![0usize; n];
    let mut trace = Vec::new();
    for _ in 0..max_iters {
        // assignment step
        let mut changed = false;
        for (i, f) in features.iter().enumerate() {
            let mut best = (f64::INFINITY, 0usize);
            for (c, center) in centers.iter().enumerate() {
                let dist = sq_dist(f, center);
                if dist < best.0 {
                    best = (dist, c);
                }
            }
            if labels[i] != best.1 {
                labels[i] = best.1;
                changed = true;
            }
        }
        // update step
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (f, &l) in features.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(f) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the point farthest from its
                // currently assigned centroid
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(&features[a], &centers[labels[a]])
                            .total_cmp(&sq_dist(&features[b], &centers[labels[b]]))
                    })
                    .unwrap();
                centers[c] = features[far].clone();
                changed = true;
            } else {
                for (s, cc) in sums[c].iter().zip(centers[c].iter_mut()) {
                    *cc = s / counts[c] as f64;
                }
            }
        }
        let wcss: f64 = features
            .iter()
            .zip(&labels)
            .map(|(f, &l)| sq_dist(f, &centers[l]))
            .sum();
        trace.push(wcss);
        if !changed {
            break;
        }
    }
    KMeansResult {
        labels,
        wcss: *trace.last().unwrap(),
        wcss_trace: trace,
    }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(restart as u64))
}

/// k-means over arbitrary feature vectors: best of `restarts` runs by WCSS,
/// ties broken by restart index.
pub fn kmeans(features: &[Vec<f64>], k: usize, seed: u64, opts: KMeansOptions) -> Result<KMeansResult> {
    let n = features.len();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("k must be in 1..={n}, got {k}")));
    }
    let results: Vec<(usize, KMeansResult)> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(seed, r);
            let centers = plus_plus_init(features, k, &mut rng);
            (r, lloyd(features, k, centers, opts.max_iters))
        })
        .collect();
    Ok(results
        .into_iter()
        .min_by(|(ra, a), (rb, b)| a.wcss.total_cmp(&b.wcss).then(ra.cmp(rb)))
        .map(|(_, r)| r)
        .unwrap())
}

/// k-means over distance-matrix rows (each path described by its distances
/// to all paths).
pub fn kmeans_cluster(matrix: &DistanceMatrix, k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusterAssignment> {
    let result = kmeans(&matrix.values, k, seed, opts)?;
    Ok(ClusterAssignment::from_raw(matrix.ids.clone(), &result.labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> KMeansOptions {
        KMeansOptions::default()
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let features: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 10.0, 0.0]).collect();
        let r = kmeans(&features, 5, 1, opts()).unwrap();
        assert!((r.wcss).abs() < 1e-12);
        let mut sorted = r.labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 5);
    }

    #[test]
    fn identical_rows_in_two_groups() {
        let mut features = vec![vec![0.0, 0.0]; 4];
        features.extend(vec![vec![100.0, 100.0]; 4]);
        let r = kmeans(&features, 2, 42, opts()).unwrap();
        assert_eq!(r.wcss, 0.0);
        assert!(r.labels[..4].iter().all(|&l| l == r.labels[0]));
        assert!(r.labels[4..].iter().all(|&l| l == r.labels[4]));
        assert_ne!(r.labels[0], r.labels[4]);
    }

    /// Exhaustive 2-partition oracle at tiny n: the best-WCSS bipartition.
    fn brute_force_two_partition(features: &[Vec<f64>]) -> (f64, Vec<usize>) {
        let n = features.len();
        let d = features[0].len();
        let mut best = (f64::INFINITY, vec![0; n]);
        for mask in 1..(1u32 << (n - 1)) {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut sums = vec![vec![0.0; d]; 2];
            let mut counts = [0usize; 2];
            for (f, &l) in features.iter().zip(&labels) {
                counts[l] += 1;
                for (s, x) in sums[l].iter_mut().zip(f) {
                    *s += x;
                }
            }
            if counts[0] == 0 || counts[1] == 0 {
                continue;
            }
            let centers: Vec<Vec<f64>> = (0..2)
                .map(|c| sums[c].iter().map(|s| s / counts[c] as f64).collect())
                .collect();
            let wcss: f64 = features.iter().zip(&labels).map(|(f, &l)| sq_dist(f, &centers[l])).sum();
            if wcss < best.0 {
                best = (wcss, labels);
            }
        }
        best
    }

    #[test]
    fn matches_brute_force_partition_oracle() {
        let mut rng = restart_rng(99, 0);
        let mut features = Vec::new();
        for _ in 0..10 {
            features.push(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        }
        for _ in 0..10 {
            features.push(vec![50.0 + rng.random_range(-1.0..1.0), 50.0 + rng.random_range(-1.0..1.0)]);
        }
        let r = kmeans(&features, 2, 7, opts()).unwrap();
        let (oracle_wcss, oracle_labels) = brute_force_two_partition(&features);
        assert!((r.wcss - oracle_wcss).abs() < 1e-9 * oracle_wcss.max(1.0));
        // same partition up to label swap
        let agree = r.labels.iter().zip(&oracle_labels).filter(|(a, b)| a == b).count();
        assert!(agree == 20 || agree == 0);
    }

    #[test]
    fn wcss_nonincreasing_within_restart() {
        let mut rng = restart_rng(3, 1);
        let features: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
            .collect();
        let r = kmeans(&features, 4, 5, opts()).unwrap();
        for w in r.wcss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "WCSS increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut rng = restart_rng(8, 2);
        let features: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
            .collect();
        let a = kmeans(&features, 3, 11, opts()).unwrap();
        let b = kmeans(&features, 3, 11, opts()).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.wcss, b.wcss);
    }

    #[test]
    fn invalid_k_rejected() {
        let features = vec![vec![0.0], vec![1.0]];
        assert!(kmeans(&features, 0, 1, opts()).is_err());
        assert!(kmeans(&features, 3, 1, opts()).is_err());
    }
}
