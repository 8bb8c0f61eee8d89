//! Evaluation: cluster-to-class alignment, confusion matrices, and
//! per-class precision/recall/F1.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterAssignment;
use crate::error::{Error, Result};

/// Synthetic label for clusters that match no ground-truth class.
pub const OTHER_LABEL: &str = "OTHER";

/// k×k counts, rows actual, columns predicted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_order: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    fn index_of(&self, label: &str) -> Result<usize> {
        self.class_order
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Input(format!("unknown label `{label}`")))
    }
}

/// One-vs-all reduction of a multiclass confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any of the ratios was 0/0 and defined as 0.
    pub degenerate: bool,
}

/// Minimum-cost assignment on a square cost matrix; returns `row_of_col`.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // col -> row (1-based, 0 = unassigned)
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_of_col = vec![usize::MAX; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_of_col[j - 1] = p[j] - 1;
        }
    }
    row_of_col
}

/// Result of aligning cluster indices to class labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// Cluster index -> class label (or [`OTHER_LABEL`]).
    pub mapping: BTreeMap<usize, String>,
    /// Predictions relabeled through the mapping, aligned to the input ids.
    pub relabeled: Vec<(String, String)>,
}

/// Optimal one-to-one mapping of cluster indices onto truth labels,
/// maximizing the confusion-matrix diagonal. Clusters left unmatched map
/// to [`OTHER_LABEL`].
pub fn align_labels(predicted: &ClusterAssignment, truth: &[(String, String)]) -> Result<Alignment> {
    let truth_map: BTreeMap<&str, &str> = truth.iter().map(|(id, l)| (id.as_str(), l.as_str())).collect();
    if predicted.ids.len() != truth.len()
        || predicted.ids.iter().any(|id| !truth_map.contains_key(id.as_str()))
    {
        return Err(Error::Input("predicted and truth id sets differ".to_string()));
    }
    let classes: Vec<String> = {
        let set: BTreeSet<&str> = truth_map.values().cloned().collect();
        set.into_iter().map(String::from).collect()
    };
    let k_pred = predicted.k;
    let k_true = classes.len();
    let n = k_pred.max(k_true);

    // contingency[cluster][class] = overlap count
    let mut contingency = vec![vec![0usize; n]; n];
    for (id, &cluster) in predicted.ids.iter().zip(&predicted.labels) {
        let label = truth_map[id.as_str()];
        let class_idx = classes.iter().position(|c| c == label).unwrap();
        contingency[cluster][class_idx] += 1;
    }
    // maximize overlap == minimize (max - overlap)
    let max_cell = contingency.iter().flatten().max().copied().unwrap_or(0) as f64;
    let cost: Vec<Vec<f64>> = contingency
        .iter()
        .map(|row| row.iter().map(|&c| max_cell - c as f64).collect())
        .collect();
    let row_of_col = hungarian_min(&cost);

    let mut mapping: BTreeMap<usize, String> = BTreeMap::new();
    for (col, &row) in row_of_col.iter().enumerate() {
        if row < k_pred {
            let label = if col < k_true {
                classes[col].clone()
            } else {
                OTHER_LABEL.to_string()
            };
            mapping.insert(row, label);
        }
    }
    let relabeled = predicted
        .ids
        .iter()
        .zip(&predicted.labels)
        .map(|(id, cluster)| (id.clone(), mapping[cluster].clone()))
        .collect();
    Ok(Alignment { mapping, relabeled })
}

/// counts[a][p] = voyages with actual class `a` predicted as `p`.
pub fn confusion(actual: &[String], predicted: &[String], class_order: &[String]) -> Result<ConfusionMatrix> {
    if actual.len() != predicted.len() {
        return Err(Error::Input("actual and predicted lengths differ".to_string()));
    }
    let index: BTreeMap<&str, usize> = class_order
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let k = class_order.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (a, p) in actual.iter().zip(predicted) {
        let ai = *index
            .get(a.as_str())
            .ok_or_else(|| Error::Input(format!("unknown label `{a}`")))?;
        let pi = *index
            .get(p.as_str())
            .ok_or_else(|| Error::Input(format!("unknown label `{p}`")))?;
        counts[ai][pi] += 1;
    }
    Ok(ConfusionMatrix {
        class_order: class_order.to_vec(),
        counts,
    })
}

/// Binary TP/FP/FN/TN reduction for one class.
pub fn one_vs_all(cm: &ConfusionMatrix, label: &str) -> Result<BinaryCounts> {
    let i = cm.index_of(label)?;
    let tp = cm.counts[i][i];
    let col_sum: usize = cm.counts.iter().map(|row| row[i]).sum();
    let row_sum: usize = cm.counts[i].iter().sum();
    let total = cm.total();
    let fp = col_sum - tp;
    let fn_ = row_sum - tp;
    Ok(BinaryCounts {
        tp,
        fp,
        fn_,
        tn: total - tp - fp - fn_,
    })
}

/// Precision, recall, and F1 from binary counts; 0/0 ratios are defined as
/// 0 and flagged.
pub fn class_metrics(label: &str, bc: BinaryCounts) -> ClassMetrics {
    let mut degenerate = false;
    let mut ratio = |num: usize, den: usize| -> f64 {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(bc.tp, bc.tp + bc.fp);
    let recall = ratio(bc.tp, bc.tp + bc.fn_);
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        label: label.to_string(),
        precision,
        recall,
        f1,
        degenerate,
    }
}

/// Full evaluation report, serializable to JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    /// Cluster-to-label mapping when alignment was performed.
    pub alignment: Option<BTreeMap<usize, String>>,
}

pub const METRICS_SCHEMA_VERSION: u32 = 1;

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix, alignment: Option<BTreeMap<usize, String>>) -> Self {
        let per_class = cm
            .class_order
            .iter()
            .map(|label| class_metrics(label, one_vs_all(&cm, label).unwrap()))
            .collect();
        MetricsReport {
            schema_version: METRICS_SCHEMA_VERSION,
            confusion: cm,
            per_class,
            alignment,
        }
    }

    /// Human-readable table: class rows with Precision/Recall/F1 columns to
    /// 3 decimal places, followed by the confusion matrix.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .per_class
            .iter()
            .map(|m| m.label.len())
            .max()
            .unwrap_or(5)
            .max(5);
        out.push_str(&format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}\n",
            "Paths", "Precision", "Recall", "F1-score"
        ));
        for m in &self.per_class {
            out.push_str(&format!(
                "{:<width$}  {:>9.3}  {:>9.3}  {:>9.3}{}\n",
                m.label,
                m.precision,
                m.recall,
                m.f1,
                if m.degenerate { "  (degenerate)" } else { "" }
            ));
        }
        out.push('\n');
        out.push_str(&format!("{:<width$}  Predicted\n", "Actual"));
        let cw = self
            .confusion
            .class_order
            .iter()
            .map(|l| l.len())
            .max()
            .unwrap_or(3)
            .max(3);
        out.push_str(&format!("{:<width$}", ""));
        for label in &self.confusion.class_order {
            out.push_str(&format!("  {label:>cw$}"));
        }
        out.push('\n');
        for (label, row) in self.confusion.class_order.iter().zip(&self.confusion.counts) {
            out.push_str(&format!("{label:<width$}"));
            for count in row {
                out.push_str(&format!("  {count:>cw$}"));
            }
            out.push('\n');
        }
        out
    }
}
