//! `pathclust` — command-line pipeline for vessel path identification:
//! generate synthetic fleets, compute ANND distance matrices, cluster,
//! fit/apply segmented Gaussian models, and evaluate predictions.

mod manifest;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pathclust::cluster::{
    cut_dendrogram, gmm_cluster, hierarchical_cluster, kmeans_cluster, read_assignment,
    write_assignment, ClusterAssignment, GmmOptions, KMeansOptions, Linkage,
};
use pathclust::error::Error;
use pathclust::geo::{make_projection, project, GeoPoint, Projection};
use pathclust::ingest::{
    class_statistics, parse_labels, parse_voyages, write_class_statistics, write_labels,
    write_voyages, LabeledVoyage, Voyage,
};
use pathclust::metrics::{align_labels, confusion, MetricsReport, OTHER_LABEL};
use pathclust::segment::{
    build_scheme, classify_voyage, fit_segment_models, learn_signature_map, read_model, signature,
    write_model, PathModel,
};
use pathclust::synth::{default_config, generate, read_config};
use pathclust::{distance_matrix, Path};

use manifest::RunManifest;

/// Environment variable overriding the rayon worker count.
const THREADS_ENV: &str = "PATHCLUST_THREADS";

#[derive(Parser)]
#[command(name = "pathclust", version, about = "Vessel path identification from voyage position data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Hier,
    Kmeans,
    Gmm,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled fleet (voyages.csv + labels.csv).
    Gen {
        /// Generator config JSON; built-in default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Also emit this many unlabeled novel-corridor voyages
        /// (novel.csv).
        #[arg(long, default_value_t = 0)]
        novel: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute the pairwise symmetric ANND matrix of a voyage file.
    Dist {
        #[arg(long)]
        voyages: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster a distance matrix.
    Cluster {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Merge-height cutoff for hierarchical clustering, meters.
        #[arg(long, default_value_t = 100.0)]
        cutoff: f64,
        /// Cluster count; replaces the cutoff for hier, required for
        /// kmeans/gmm.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "average")]
        linkage: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Dendrogram JSON output (hier only).
        #[arg(long)]
        dendrogram: Option<PathBuf>,
    },
    /// Fit a segmented Gaussian model on labeled training voyages.
    Segment {
        #[arg(long)]
        voyages: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 8)]
        segments: usize,
        #[arg(long, default_value_t = 3)]
        components: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label voyages with a fitted segmented Gaussian model.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        voyages: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted labels (or cluster indices) against ground truth.
    Eval {
        #[arg(long)]
        predicted: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Metrics JSON output path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class fuel/duration/distance/speed statistics.
    Stats {
        #[arg(long)]
        voyages: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// gen → dist → cluster → eval in one run.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100.0)]
        cutoff: f64,
        #[arg(long, default_value = "average")]
        linkage: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    if let Ok(n) = std::env::var(THREADS_ENV) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got `{n}`");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for bad user input, 1 for everything else.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 1,
        _ => 2,
    }
}

type Result<T> = std::result::Result<T, Error>;

fn open(path: &FsPath) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Input(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &FsPath) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot write {}: {e}", path.display())))
    })?))
}

fn load_voyages(path: &FsPath) -> Result<Vec<Voyage>> {
    Ok(parse_voyages(open(path)?, false)?.voyages)
}

/// Projection centered at the mean position of the voyages' first points;
/// deterministic for a given input file.
fn fleet_projection(voyages: &[Voyage]) -> Result<Projection> {
    if voyages.is_empty() {
        return Err(Error::Input("no voyages in input".to_string()));
    }
    let n = voyages.len() as f64;
    let lat = voyages.iter().map(|v| v.points[0].position.lat).sum::<f64>() / n;
    let lon = voyages.iter().map(|v| v.points[0].position.lon).sum::<f64>() / n;
    make_projection(GeoPoint::new(lat, lon)?)
}

fn voyages_to_paths(voyages: &[Voyage], proj: &Projection) -> Result<Vec<Path>> {
    voyages
        .iter()
        .map(|v| {
            Path::new(
                v.id.clone(),
                v.points.iter().map(|p| project(p.position, proj)).collect(),
            )
        })
        .collect()
}

fn join_labels(voyages: &[Voyage], labels: &[(String, String)]) -> Result<Vec<LabeledVoyage>> {
    let map: BTreeMap<&str, &str> = labels.iter().map(|(id, l)| (id.as_str(), l.as_str())).collect();
    voyages
        .iter()
        .map(|v| {
            let label = map
                .get(v.id.as_str())
                .ok_or_else(|| Error::Input(format!("no label for voyage `{}`", v.id)))?;
            Ok(LabeledVoyage {
                voyage: v.clone(),
                class_label: label.to_string(),
            })
        })
        .collect()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { config, seed, novel, out_dir } => cmd_gen(config, seed, novel, &out_dir),
        Command::Dist { voyages, out } => cmd_dist(&voyages, &out),
        Command::Cluster { matrix, method, cutoff, k, linkage, seed, out, dendrogram } => {
            cmd_cluster(&matrix, method, cutoff, k, &linkage, seed, &out, dendrogram.as_deref())
        }
        Command::Segment { voyages, labels, segments, components, seed, out } => {
            cmd_segment(&voyages, &labels, segments, components, seed, &out)
        }
        Command::Classify { model, voyages, out } => cmd_classify(&model, &voyages, &out),
        Command::Eval { predicted, truth, out } => cmd_eval(&predicted, &truth, out.as_deref()),
        Command::Stats { voyages, labels, out } => cmd_stats(&voyages, &labels, &out),
        Command::Pipeline { config, seed, cutoff, linkage, out_dir } => {
            cmd_pipeline(config, seed, cutoff, &linkage, &out_dir)
        }
    }
}

fn cmd_gen(config: Option<PathBuf>, seed: Option<u64>, novel: usize, out_dir: &FsPath) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut cfg = match &config {
        Some(path) => read_config(open(path)?)?,
        None => default_config(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let fleet = generate(&cfg)?;
    let voyages: Vec<Voyage> = fleet.iter().map(|l| l.voyage.clone()).collect();
    let labels: Vec<(String, String)> = fleet
        .iter()
        .map(|l| (l.voyage.id.clone(), l.class_label.clone()))
        .collect();
    let voyages_path = out_dir.join("voyages.csv");
    let labels_path = out_dir.join("labels.csv");
    write_voyages(create(&voyages_path)?, &voyages)?;
    write_labels(create(&labels_path)?, &labels)?;
    let mut outputs = vec![voyages_path, labels_path];
    if novel > 0 {
        let novel_voyages = pathclust::generate_novel(&cfg, novel)?;
        let novel_path = out_dir.join("novel.csv");
        write_voyages(create(&novel_path)?, &novel_voyages)?;
        outputs.push(novel_path);
    }
    RunManifest::new("gen")
        .parameters(serde_json::json!({ "config": config, "novel": novel }))
        .seed(cfg.seed)
        .inputs(config.as_deref())?
        .outputs(&outputs)?
        .write(&out_dir.join("gen.manifest.json"))
}

fn cmd_dist(voyages_path: &FsPath, out: &FsPath) -> Result<()> {
    let voyages = load_voyages(voyages_path)?;
    let proj = fleet_projection(&voyages)?;
    let paths = voyages_to_paths(&voyages, &proj)?;
    let matrix = distance_matrix(&paths)?;
    pathclust::annd::write_matrix(create(out)?, &matrix)?;
    RunManifest::new("dist")
        .inputs(Some(voyages_path))?
        .outputs(&[out.to_path_buf()])?
        .write(&manifest_sibling(out))
}

#[allow(clippy::too_many_arguments)]
fn cmd_cluster(
    matrix_path: &FsPath,
    method: Method,
    cutoff: f64,
    k: Option<usize>,
    linkage: &str,
    seed: u64,
    out: &FsPath,
    dendrogram_out: Option<&FsPath>,
) -> Result<()> {
    let matrix = pathclust::annd::read_matrix(open(matrix_path)?)?;
    let assignment = match method {
        Method::Hier => {
            let linkage: Linkage = linkage.parse()?;
            let (dendrogram, by_cutoff) = hierarchical_cluster(&matrix, linkage, cutoff)?;
            let assignment = match k {
                Some(k) => cut_dendrogram(&dendrogram, k)?,
                None => by_cutoff,
            };
            if let Some(path) = dendrogram_out {
                serde_json::to_writer_pretty(create(path)?, &dendrogram)?;
            }
            assignment
        }
        Method::Kmeans => {
            let k = k.ok_or_else(|| Error::Parameter("kmeans requires --k".to_string()))?;
            kmeans_cluster(&matrix, k, seed, KMeansOptions::default())?
        }
        Method::Gmm => {
            let k = k.ok_or_else(|| Error::Parameter("gmm requires --k".to_string()))?;
            gmm_cluster(&matrix, k, seed, GmmOptions::default())?
        }
    };
    write_assignment(create(out)?, &assignment)?;
    let mut outputs = vec![out.to_path_buf()];
    if let Some(d) = dendrogram_out {
        outputs.push(d.to_path_buf());
    }
    RunManifest::new("cluster")
        .parameters(serde_json::json!({
            "method": format!("{method:?}").to_lowercase(),
            "cutoff": cutoff,
            "k": k,
            "linkage": linkage,
        }))
        .seed(seed)
        .inputs(Some(matrix_path))?
        .outputs(&outputs)?
        .write(&manifest_sibling(out))
}

fn cmd_segment(
    voyages_path: &FsPath,
    labels_path: &FsPath,
    segments: usize,
    components: usize,
    seed: u64,
    out: &FsPath,
) -> Result<()> {
    let voyages = load_voyages(voyages_path)?;
    let labels = parse_labels(open(labels_path)?)?;
    join_labels(&voyages, &labels)?; // every training voyage must be labeled
    let proj = fleet_projection(&voyages)?;
    let scheme = build_scheme(&voyages, segments, &proj)?;
    let models = fit_segment_models(&voyages, &scheme, components, seed, &proj)?;
    let signatures: Vec<_> = voyages.iter().map(|v| signature(v, &models, &proj)).collect();
    let map = learn_signature_map(&signatures, &labels)?;
    write_model(create(out)?, &PathModel::new(models, map))?;
    RunManifest::new("segment")
        .parameters(serde_json::json!({ "segments": segments, "components": components }))
        .seed(seed)
        .inputs_many(&[voyages_path, labels_path])?
        .outputs(&[out.to_path_buf()])?
        .write(&manifest_sibling(out))
}

fn cmd_classify(model_path: &FsPath, voyages_path: &FsPath, out: &FsPath) -> Result<()> {
    let model = read_model(open(model_path)?)?;
    let voyages = load_voyages(voyages_path)?;
    let mut wtr = csv::Writer::from_writer(create(out)?);
    wtr.write_record(["voyage_id", "class_label", "confidence", "novel_adjacent", "below_floor"])
        .map_err(Error::Csv)?;
    for v in &voyages {
        let c = classify_voyage(v, &model.models, &model.map)?;
        wtr.write_record([
            c.voyage_id.as_str(),
            c.label.as_str(),
            &format!("{:.6}", c.confidence),
            if c.novel_adjacent { "true" } else { "false" },
            if c.below_floor { "true" } else { "false" },
        ])
        .map_err(Error::Csv)?;
    }
    wtr.flush()?;
    drop(wtr);
    RunManifest::new("classify")
        .inputs_many(&[model_path, voyages_path])?
        .outputs(&[out.to_path_buf()])?
        .write(&manifest_sibling(out))
}

/// Evaluate predictions. Predicted labels drawn from the truth's class set
/// are scored directly; numeric cluster indices are first aligned onto
/// classes by optimal assignment.
fn cmd_eval(predicted_path: &FsPath, truth_path: &FsPath, out: Option<&FsPath>) -> Result<()> {
    let truth = parse_labels(open(truth_path)?)?;
    let truth_map: BTreeMap<&str, &str> = truth.iter().map(|(id, l)| (id.as_str(), l.as_str())).collect();
    let classes: BTreeSet<&str> = truth_map.values().copied().collect();

    let predicted = parse_labels(open(predicted_path)?).or_else(|_| {
        // Assignment files say `cluster`, not `class_label`.
        let a = read_assignment(open(predicted_path)?)?;
        Ok::<_, Error>(
            a.ids
                .iter()
                .zip(&a.labels)
                .map(|(id, l)| (id.clone(), l.to_string()))
                .collect(),
        )
    })?;

    let pred_ids: BTreeSet<&str> = predicted.iter().map(|(id, _)| id.as_str()).collect();
    let truth_ids: BTreeSet<&str> = truth_map.keys().copied().collect();
    if pred_ids != truth_ids || predicted.len() != truth.len() {
        return Err(Error::Input("predicted and truth id sets differ".to_string()));
    }

    let direct = predicted.iter().all(|(_, l)| classes.contains(l.as_str()));
    let numeric = predicted.iter().all(|(_, l)| l.parse::<usize>().is_ok());

    let (pred_labels, alignment) = if direct {
        (predicted, None)
    } else if numeric {
        let raw: Vec<usize> = predicted.iter().map(|(_, l)| l.parse().unwrap()).collect();
        let ids: Vec<String> = predicted.iter().map(|(id, _)| id.clone()).collect();
        let assignment = ClusterAssignment::from_raw(ids, &raw);
        let aligned = align_labels(&assignment, &truth)?;
        (aligned.relabeled, Some(aligned.mapping))
    } else {
        return Err(Error::Input(
            "predicted labels are neither truth classes nor cluster indices".to_string(),
        ));
    };

    let mut class_order: Vec<String> = classes.iter().map(|s| s.to_string()).collect();
    if pred_labels.iter().any(|(_, l)| l == OTHER_LABEL) && !classes.contains(OTHER_LABEL) {
        class_order.push(OTHER_LABEL.to_string());
    }
    let pred_by_id: BTreeMap<&str, &str> = pred_labels.iter().map(|(id, l)| (id.as_str(), l.as_str())).collect();
    let (actual, pred): (Vec<String>, Vec<String>) = truth
        .iter()
        .map(|(id, label)| (label.clone(), pred_by_id[id.as_str()].to_string()))
        .unzip();
    let cm = confusion(&actual, &pred, &class_order)?;
    let report = MetricsReport::from_confusion(cm, alignment);
    print!("{}", report.render_table());
    if let Some(path) = out {
        serde_json::to_writer_pretty(create(path)?, &report)?;
        RunManifest::new("eval")
            .inputs_many(&[predicted_path, truth_path])?
            .outputs(&[path.to_path_buf()])?
            .write(&manifest_sibling(path))?;
    }
    Ok(())
}

fn cmd_stats(voyages_path: &FsPath, labels_path: &FsPath, out: &FsPath) -> Result<()> {
    let voyages = load_voyages(voyages_path)?;
    let labels = parse_labels(open(labels_path)?)?;
    let labeled = join_labels(&voyages, &labels)?;
    let stats = class_statistics(&labeled);
    write_class_statistics(create(out)?, &stats)?;
    RunManifest::new("stats")
        .inputs_many(&[voyages_path, labels_path])?
        .outputs(&[out.to_path_buf()])?
        .write(&manifest_sibling(out))
}

fn cmd_pipeline(
    config: Option<PathBuf>,
    seed: Option<u64>,
    cutoff: f64,
    linkage: &str,
    out_dir: &FsPath,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    cmd_gen(config.clone(), seed, 0, out_dir)?;
    let voyages = out_dir.join("voyages.csv");
    let labels = out_dir.join("labels.csv");
    let matrix = out_dir.join("matrix.csv");
    let assignment = out_dir.join("assignment.csv");
    let dendrogram = out_dir.join("dendrogram.json");
    let metrics = out_dir.join("metrics.json");
    cmd_dist(&voyages, &matrix)?;
    cmd_cluster(&matrix, Method::Hier, cutoff, None, linkage, seed.unwrap_or(1), &assignment, Some(&dendrogram))?;
    cmd_eval(&assignment, &labels, Some(&metrics))?;
    RunManifest::new("pipeline")
        .parameters(serde_json::json!({ "cutoff": cutoff, "linkage": linkage, "config": config }))
        .seed(seed.unwrap_or(1))
        .outputs(&[voyages, labels, matrix, assignment, dendrogram, metrics])?
        .write(&out_dir.join("pipeline.manifest.json"))
}

fn manifest_sibling(out: &FsPath) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}
