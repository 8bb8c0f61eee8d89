//! Python bindings: a thin string façade over the library.
//!
//! Voyage and label collections travel as the same CSV text the CLI reads
//! and writes; models and configs travel as JSON. Projections are derived
//! the same way as the CLI (mean of the voyages' first positions), so
//! results match the command-line pipeline byte for byte.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use pathclust::annd;
use pathclust::cluster::{GmmOptions, KMeansOptions};
use pathclust::geo::{make_projection, project, GeoPoint, Projection};
use pathclust::ingest::{self, LabeledVoyage, Voyage};
use pathclust::metrics::{align_labels, confusion, MetricsReport};
use pathclust::segment::{self, PathModel};
use pathclust::synth;
use pathclust::{
    build_scheme, classify_voyage, fit_segment_models, gmm_cluster, hierarchical_cluster,
    kmeans_cluster, learn_signature_map, signature, ClusterAssignment, DistanceMatrix, Linkage,
    Path,
};

fn err(e: pathclust::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_voyages_csv(text: &str) -> PyResult<Vec<Voyage>> {
    Ok(ingest::parse_voyages(text.as_bytes(), false).map_err(err)?.voyages)
}

fn parse_labels_csv(text: &str) -> PyResult<Vec<(String, String)>> {
    ingest::parse_labels(text.as_bytes()).map_err(err)
}

fn voyages_csv(voyages: &[Voyage]) -> PyResult<String> {
    let mut buf = Vec::new();
    ingest::write_voyages(&mut buf, voyages).map_err(err)?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn labels_csv(labels: &[(String, String)]) -> PyResult<String> {
    let mut buf = Vec::new();
    ingest::write_labels(&mut buf, labels).map_err(err)?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn split_fleet(fleet: Vec<LabeledVoyage>) -> PyResult<(String, String)> {
    let labels: Vec<(String, String)> = fleet
        .iter()
        .map(|lv| (lv.voyage.id.clone(), lv.class_label.clone()))
        .collect();
    let voyages: Vec<Voyage> = fleet.into_iter().map(|lv| lv.voyage).collect();
    Ok((voyages_csv(&voyages)?, labels_csv(&labels)?))
}

fn fleet_projection(voyages: &[Voyage]) -> PyResult<Projection> {
    if voyages.is_empty() {
        return Err(PyValueError::new_err("no voyages in input"));
    }
    let n = voyages.len() as f64;
    let lat = voyages.iter().map(|v| v.points[0].position.lat).sum::<f64>() / n;
    let lon = voyages.iter().map(|v| v.points[0].position.lon).sum::<f64>() / n;
    make_projection(GeoPoint::new(lat, lon).map_err(err)?).map_err(err)
}

fn voyages_to_paths(voyages: &[Voyage], proj: &Projection) -> PyResult<Vec<Path>> {
    voyages
        .iter()
        .map(|v| {
            Path::new(
                v.id.clone(),
                v.points.iter().map(|p| project(p.position, proj)).collect(),
            )
            .map_err(err)
        })
        .collect()
}

fn matrix_from_parts(ids: Vec<String>, values: Vec<Vec<f64>>) -> PyResult<DistanceMatrix> {
    if values.len() != ids.len() || values.iter().any(|row| row.len() != ids.len()) {
        return Err(PyValueError::new_err("matrix must be square over the id list"));
    }
    Ok(DistanceMatrix { ids, values })
}

/// Default generator configuration, as JSON.
#[pyfunction]
fn default_config() -> PyResult<String> {
    serde_json::to_string_pretty(&synth::default_config()).map_err(json_err)
}

/// Generate the synthetic fleet for a JSON configuration.
///
/// Returns `(voyages_csv, labels_csv)`.
#[pyfunction]
fn generate_fleet(config_json: &str) -> PyResult<(String, String)> {
    let config = synth::read_config(config_json.as_bytes()).map_err(err)?;
    split_fleet(synth::generate(&config).map_err(err)?)
}

/// Generate `count` off-corridor voyages for a JSON configuration.
#[pyfunction]
fn generate_novel(config_json: &str, count: usize) -> PyResult<String> {
    let config = synth::read_config(config_json.as_bytes()).map_err(err)?;
    voyages_csv(&synth::generate_novel(&config, count).map_err(err)?)
}

/// Stratified train/eval split of a labeled fleet.
///
/// Returns `((train_voyages_csv, train_labels_csv), (eval_voyages_csv,
/// eval_labels_csv))`.
#[pyfunction]
fn stratified_split(
    voyages_csv_text: &str,
    labels_csv_text: &str,
    train_fraction: f64,
    seed: u64,
) -> PyResult<((String, String), (String, String))> {
    let voyages = parse_voyages_csv(voyages_csv_text)?;
    let labels = parse_labels_csv(labels_csv_text)?;
    let fleet = join_labels(voyages, &labels)?;
    let (train, eval) = synth::stratified_split(&fleet, train_fraction, seed).map_err(err)?;
    Ok((split_fleet(train)?, split_fleet(eval)?))
}

fn join_labels(voyages: Vec<Voyage>, labels: &[(String, String)]) -> PyResult<Vec<LabeledVoyage>> {
    let map: std::collections::BTreeMap<&str, &str> =
        labels.iter().map(|(id, l)| (id.as_str(), l.as_str())).collect();
    voyages
        .into_iter()
        .map(|v| {
            let label = map
                .get(v.id.as_str())
                .ok_or_else(|| PyValueError::new_err(format!("no label for voyage `{}`", v.id)))?;
            Ok(LabeledVoyage {
                class_label: label.to_string(),
                voyage: v,
            })
        })
        .collect()
}

/// Pairwise symmetric ANND matrix over a voyage CSV.
///
/// Returns `(ids, values)` with `values[i][j]` in metres.
#[pyfunction]
fn distance_matrix(voyages_csv_text: &str) -> PyResult<(Vec<String>, Vec<Vec<f64>>)> {
    let voyages = parse_voyages_csv(voyages_csv_text)?;
    let proj = fleet_projection(&voyages)?;
    let paths = voyages_to_paths(&voyages, &proj)?;
    let m = annd::distance_matrix(&paths).map_err(err)?;
    Ok((m.ids, m.values))
}

/// Symmetric ANND between two single-voyage CSVs, in metres.
#[pyfunction]
fn symmetric_annd(voyage_a_csv: &str, voyage_b_csv: &str) -> PyResult<f64> {
    let mut voyages = parse_voyages_csv(voyage_a_csv)?;
    voyages.extend(parse_voyages_csv(voyage_b_csv)?);
    if voyages.len() != 2 {
        return Err(PyValueError::new_err("expected exactly one voyage per CSV"));
    }
    let proj = fleet_projection(&voyages)?;
    let paths = voyages_to_paths(&voyages, &proj)?;
    Ok(annd::symmetric_annd(&paths[0], &paths[1]))
}

/// Agglomerative clustering with a merge-height cutoff.
///
/// Returns `(ids, cluster_indices)`.
#[pyfunction]
fn cluster_hierarchical(
    ids: Vec<String>,
    values: Vec<Vec<f64>>,
    linkage: &str,
    cutoff: f64,
) -> PyResult<(Vec<String>, Vec<usize>)> {
    let matrix = matrix_from_parts(ids, values)?;
    let linkage: Linkage = linkage.parse().map_err(err)?;
    let (_, a) = hierarchical_cluster(&matrix, linkage, cutoff).map_err(err)?;
    Ok((a.ids, a.labels))
}

/// K-means over matrix rows with k-means++ seeding and restarts.
#[pyfunction]
#[pyo3(signature = (ids, values, k, seed=1))]
fn cluster_kmeans(
    ids: Vec<String>,
    values: Vec<Vec<f64>>,
    k: usize,
    seed: u64,
) -> PyResult<(Vec<String>, Vec<usize>)> {
    let matrix = matrix_from_parts(ids, values)?;
    let a = kmeans_cluster(&matrix, k, seed, KMeansOptions::default()).map_err(err)?;
    Ok((a.ids, a.labels))
}

/// Gaussian-mixture clustering over matrix rows.
#[pyfunction]
#[pyo3(signature = (ids, values, k, seed=1))]
fn cluster_gmm(
    ids: Vec<String>,
    values: Vec<Vec<f64>>,
    k: usize,
    seed: u64,
) -> PyResult<(Vec<String>, Vec<usize>)> {
    let matrix = matrix_from_parts(ids, values)?;
    let a = gmm_cluster(&matrix, k, seed, GmmOptions::default()).map_err(err)?;
    Ok((a.ids, a.labels))
}

/// Score cluster indices against a truth label CSV.
///
/// Clusters are aligned onto classes by optimal assignment first. Returns
/// the metrics report as JSON (confusion matrix, per-class
/// precision/recall/F1, and the cluster-to-class mapping).
#[pyfunction]
fn evaluate_clusters(
    ids: Vec<String>,
    cluster_indices: Vec<usize>,
    labels_csv_text: &str,
) -> PyResult<String> {
    if ids.len() != cluster_indices.len() {
        return Err(PyValueError::new_err("ids and cluster_indices lengths differ"));
    }
    let truth = parse_labels_csv(labels_csv_text)?;
    let predicted = ClusterAssignment::from_raw(ids, &cluster_indices);
    let alignment = align_labels(&predicted, &truth).map_err(err)?;
    let truth_map: std::collections::BTreeMap<&str, &str> =
        truth.iter().map(|(id, l)| (id.as_str(), l.as_str())).collect();
    let classes: Vec<String> = {
        let set: std::collections::BTreeSet<&str> = truth_map.values().copied().collect();
        set.into_iter().map(String::from).collect()
    };
    let mut actual = Vec::with_capacity(alignment.relabeled.len());
    let mut pred = Vec::with_capacity(alignment.relabeled.len());
    for (id, label) in &alignment.relabeled {
        actual.push(truth_map[id.as_str()].to_string());
        pred.push(label.clone());
    }
    let cm = confusion(&actual, &pred, &classes).map_err(err)?;
    let report = MetricsReport::from_confusion(cm, Some(alignment.mapping));
    serde_json::to_string_pretty(&report).map_err(json_err)
}

/// Fit the segmented-likelihood path model on a labeled voyage CSV.
///
/// Returns the model as JSON, as written by the CLI's `segment` command.
#[pyfunction]
#[pyo3(signature = (voyages_csv_text, labels_csv_text, segments=8, components=3, seed=1))]
fn fit_path_model(
    voyages_csv_text: &str,
    labels_csv_text: &str,
    segments: usize,
    components: usize,
    seed: u64,
) -> PyResult<String> {
    let voyages = parse_voyages_csv(voyages_csv_text)?;
    let labels = parse_labels_csv(labels_csv_text)?;
    join_labels(voyages.clone(), &labels)?; // every training voyage must be labeled
    let proj = fleet_projection(&voyages)?;
    let scheme = build_scheme(&voyages, segments, &proj).map_err(err)?;
    let models = fit_segment_models(&voyages, &scheme, components, seed, &proj).map_err(err)?;
    let signatures: Vec<_> = voyages.iter().map(|v| signature(v, &models, &proj)).collect();
    let map = learn_signature_map(&signatures, &labels).map_err(err)?;
    let mut buf = Vec::new();
    segment::write_model(&mut buf, &PathModel::new(models, map)).map_err(err)?;
    String::from_utf8(buf).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Classify voyages with a fitted model.
///
/// Returns one dict per voyage: `voyage_id`, `label`, `confidence`,
/// `novel_adjacent`, `below_floor`.
#[pyfunction]
fn classify(py: Python<'_>, model_json: &str, voyages_csv_text: &str) -> PyResult<Vec<Py<PyAny>>> {
    let model = segment::read_model(model_json.as_bytes()).map_err(err)?;
    let voyages = parse_voyages_csv(voyages_csv_text)?;
    let mut out = Vec::with_capacity(voyages.len());
    for v in &voyages {
        let c = classify_voyage(v, &model.models, &model.map).map_err(err)?;
        let dict = pyo3::types::PyDict::new(py);
        dict.set_item("voyage_id", c.voyage_id)?;
        dict.set_item("label", c.label)?;
        dict.set_item("confidence", c.confidence)?;
        dict.set_item("novel_adjacent", c.novel_adjacent)?;
        dict.set_item("below_floor", c.below_floor)?;
        out.push(dict.into_any().unbind());
    }
    Ok(out)
}

#[pymodule]
fn pathclust_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(generate_fleet, m)?)?;
    m.add_function(wrap_pyfunction!(generate_novel, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_split, m)?)?;
    m.add_function(wrap_pyfunction!(distance_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_annd, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_hierarchical, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_clusters, m)?)?;
    m.add_function(wrap_pyfunction!(fit_path_model, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    Ok(())
}
