//! Agglomerative clustering on a precomputed distance matrix.
//!
//! Inter-cluster distances are maintained with Lance-Williams updates for
//! single, complete, and average linkage. Ties on merge height are broken by
//! the lexicographically smallest pair of cluster representative ids, so the
//! merge sequence is identical across platforms.

use serde::{Deserialize, Serialize};

use crate::annd::DistanceMatrix;
use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Single,
    Complete,
    Average,
}

impl std::str::FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Linkage::Single),
            "complete" => Ok(Linkage::Complete),
            "average" => Ok(Linkage::Average),
            other => Err(Error::Parameter(format!("unknown linkage `{other}`"))),
        }
    }
}

/// One agglomeration step. Node ids follow the stepwise convention: leaves
/// are `0..m`, the merge at step `t` creates node `m + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    /// Leaf ids aligned to the source matrix order.
    pub ids: Vec<String>,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn leaves(&self) -> usize {
        self.ids.len()
    }
}

/// Builds the full dendrogram for `matrix` under the given linkage.
fn build_dendrogram(matrix: &DistanceMatrix, linkage: Linkage) -> Dendrogram {
    let m = matrix.len();
    // Active cluster state; `None` once absorbed into another cluster.
    struct Cluster {
        node: usize,
        size: usize,
        rep: String,
    }
    let mut clusters: Vec<Option<Cluster>> = matrix
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            Some(Cluster {
                node: i,
                size: 1,
                rep: id.clone(),
            })
        })
        .collect();
    let mut dist = matrix.values.clone();
    let mut merges = Vec::with_capacity(m.saturating_sub(1));

    for step in 0..m.saturating_sub(1) {
        // Find the closest active pair; break height ties by representative ids.
        let mut best: Option<(f64, (String, String), usize, usize)> = None;
        for i in 0..m {
            if clusters[i].is_none() {
                continue;
            }
            for j in (i + 1)..m {
                if clusters[j].is_none() {
                    continue;
                }
                let d = dist[i][j];
                let (ri, rj) = (&clusters[i].as_ref().unwrap().rep, &clusters[j].as_ref().unwrap().rep);
                let key = if ri <= rj {
                    (ri.clone(), rj.clone())
                } else {
                    (rj.clone(), ri.clone())
                };
                let better = match &best {
                    None => true,
                    Some((bd, bkey, _, _)) => d < *bd || (d == *bd && key < *bkey),
                };
                if better {
                    best = Some((d, key, i, j));
                }
            }
        }
        let (height, _, i, j) = best.expect("at least two active clusters");
        let (ci, cj) = (clusters[i].take().unwrap(), clusters[j].take().unwrap());
        let merged_size = ci.size + cj.size;
        merges.push(Merge {
            left: ci.node.min(cj.node),
            right: ci.node.max(cj.node),
            height,
            size: merged_size,
        });

        // Lance-Williams update into slot i.
        let (ni, nj) = (ci.size as f64, cj.size as f64);
        for k in 0..m {
            if k == i || k == j || clusters[k].is_none() {
                continue;
            }
            let (dik, djk) = (dist[i][k], dist[j][k]);
            let d = match linkage {
                Linkage::Single => dik.min(djk),
                Linkage::Complete => dik.max(djk),
                Linkage::Average => (ni * dik + nj * djk) / (ni + nj),
            };
            dist[i][k] = d;
            dist[k][i] = d;
        }
        clusters[i] = Some(Cluster {
            node: m + step,
            size: merged_size,
            rep: ci.rep.min(cj.rep),
        });
    }

    Dendrogram {
        ids: matrix.ids.clone(),
        merges,
    }
}

/// Flat clusters from a subset of merges, numbered by first occurrence in
/// leaf order.
fn components(d: &Dendrogram, use_merge: impl Fn(usize, &Merge) -> bool) -> ClusterAssignment {
    let m = d.leaves();
    // Union-find over node ids 0..(2m-1).
    let mut parent: Vec<usize> = (0..2 * m).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (t, merge) in d.merges.iter().enumerate() {
        if use_merge(t, merge) {
            let node = m + t;
            let a = find(&mut parent, merge.left);
            let b = find(&mut parent, merge.right);
            parent[a] = node;
            parent[b] = node;
        }
    }
    let raw: Vec<usize> = (0..m).map(|leaf| find(&mut parent, leaf)).collect();
    ClusterAssignment::from_raw(d.ids.clone(), &raw)
}

/// Agglomerative clustering with a merge-height cutoff: clusters are the
/// connected components after removing merges higher than `cutoff`.
pub fn hierarchical_cluster(
    matrix: &DistanceMatrix,
    linkage: Linkage,
    cutoff: f64,
) -> Result<(Dendrogram, ClusterAssignment)> {
    if cutoff.is_nan() || cutoff <= 0.0 {
        return Err(Error::Parameter(format!("cutoff must be positive, got {cutoff}")));
    }
    let d = build_dendrogram(matrix, linkage);
    let assignment = components(&d, |_, merge| merge.height <= cutoff);
    Ok((d, assignment))
}

/// Cut producing exactly `k` clusters by undoing the last `k - 1` merges.
pub fn cut_dendrogram(d: &Dendrogram, k: usize) -> Result<ClusterAssignment> {
    let m = d.leaves();
    if k == 0 || k > m {
        return Err(Error::Parameter(format!("k must be in 1..={m}, got {k}")));
    }
    let keep = m - k;
    Ok(components(d, |t, _| t < keep))
}
