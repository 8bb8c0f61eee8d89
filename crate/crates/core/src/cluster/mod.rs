//! Clustering engines applied to the distance matrix, plus the reusable
//! EM-fitted Gaussian mixture used by the segmented-likelihood method.

mod gmm;
mod hierarchical;
mod kmeans;

pub use gmm::{gmm_cluster, gmm_fit, gmm_log_likelihood, gmm_responsibilities, GaussianMixture, GmmComponent, GmmOptions};
pub use hierarchical::{cut_dendrogram, hierarchical_cluster, Dendrogram, Linkage, Merge};
pub use kmeans::{kmeans, kmeans_cluster, KMeansOptions, KMeansResult};

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat cluster labels over a set of voyages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl ClusterAssignment {
    /// Builds an assignment from raw labels, compacting indices so every
    /// cluster in `[0, k)` is used and numbering follows first occurrence.
    pub fn from_raw(ids: Vec<String>, raw: &[usize]) -> Self {
        let mut remap: Vec<Option<usize>> = vec![None; raw.iter().max().map_or(0, |m| m + 1)];
        let mut next = 0usize;
        let labels: Vec<usize> = raw
            .iter()
            .map(|&r| {
                *remap[r].get_or_insert_with(|| {
                    let v = next;
                    next += 1;
                    v
                })
            })
            .collect();
        ClusterAssignment {
            ids,
            labels,
            k: next,
        }
    }
}

/// Writes a `voyage_id,cluster` assignment file.
pub fn write_assignment<W: Write>(writer: W, a: &ClusterAssignment) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["voyage_id", "cluster"])?;
    for (id, label) in a.ids.iter().zip(&a.labels) {
        wtr.write_record([id.as_str(), &label.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a `voyage_id,cluster` assignment file.
pub fn read_assignment<R: Read>(reader: R) -> Result<ClusterAssignment> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let id_col = headers
        .iter()
        .position(|h| h.trim() == "voyage_id")
        .ok_or_else(|| Error::MissingColumn("voyage_id".to_string()))?;
    let cluster_col = headers
        .iter()
        .position(|h| h.trim() == "cluster")
        .ok_or_else(|| Error::MissingColumn("cluster".to_string()))?;
    let mut ids = Vec::new();
    let mut raw = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record.get(id_col).ok_or_else(|| Error::BadRow {
            line,
            message: "short row".to_string(),
        })?;
        let cluster: usize = record
            .get(cluster_col)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::BadRow {
                line,
                message: "unparseable cluster index".to_string(),
            })?;
        ids.push(id.trim().to_string());
        raw.push(cluster);
    }
    Ok(ClusterAssignment::from_raw(ids, &raw))
}

#[cfg(test)]
mod assignment_tests {
    use super::*;

    #[test]
    fn from_raw_compacts_by_first_occurrence() {
        let a = ClusterAssignment::from_raw(
            vec!["a".into(), "b".into(), "c".into()],
            &[7, 2, 7],
        );
        assert_eq!(a.labels, vec![0, 1, 0]);
        assert_eq!(a.k, 2);
    }

    #[test]
    fn assignment_round_trip() {
        let a = ClusterAssignment::from_raw(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &[0, 1, 1, 2],
        );
        let mut buf = Vec::new();
        write_assignment(&mut buf, &a).unwrap();
        let back = read_assignment(buf.as_slice()).unwrap();
        assert_eq!(back, a);
    }
}
