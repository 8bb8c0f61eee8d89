//! Vessel path identification from position-only voyage data.
//!
//! Two complementary methods over a shared geometry core:
//!
//! * **Distance clustering** — pairwise average nearest-neighbor distance
//!   (ANND) between voyage tracks, clustered hierarchically, with k-means,
//!   or with a Gaussian mixture ([`annd`], [`cluster`]).
//! * **Segmented Gaussian likelihood** — the corridor is split into
//!   along-route segments, one mixture is fitted per segment, and voyages
//!   are labeled by their per-segment component signature ([`segment`]).
//!
//! [`synth`] generates a reproducible two-port, five-class fleet for
//! benchmarking, and [`metrics`] scores predictions against ground truth.

pub mod annd;
pub mod cluster;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod metrics;
pub mod segment;
pub mod synth;

pub use annd::{directed_annd, distance_matrix, symmetric_annd, DistanceMatrix, Path};
pub use cluster::{
    cut_dendrogram, gmm_cluster, gmm_fit, hierarchical_cluster, kmeans_cluster, read_assignment,
    write_assignment, ClusterAssignment, Dendrogram, GaussianMixture, Linkage,
};
pub use error::{Error, Result};
pub use geo::{
    euclidean_distance, haversine_distance, make_projection, project, unproject, GeoPoint,
    LocalPoint, Projection,
};
pub use ingest::{parse_labels, parse_voyages, LabeledVoyage, Voyage, VoyagePoint};
pub use metrics::{align_labels, class_metrics, confusion, one_vs_all, MetricsReport};
pub use segment::{
    build_scheme, classify_voyage, fit_segment_models, learn_signature_map, signature, PathModel,
    PathSignature, SegmentModels, SegmentScheme, SignatureMap,
};
pub use synth::{default_config, generate, generate_novel, GeneratorConfig, RouteArchetype};
