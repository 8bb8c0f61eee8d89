use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geographic point: lat={lat}, lon={lon}")]
    InvalidGeoPoint { lat: f64, lon: f64 },

    #[error("degenerate projection origin at lat={lat}: too close to a pole")]
    DegenerateProjection { lat: f64 },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {line}: {message}")]
    BadRow { line: u64, message: String },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("empty path for voyage `{0}`")]
    EmptyPath(String),

    #[error("distance matrix needs at least 2 paths, got {0}")]
    TooFewPaths(usize),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("gmm fit failed: {0}")]
    GmmFit(String),

    #[error("segment scheme error: {0}")]
    Scheme(String),

    #[error("segment {segment} has {points} training points, needs at least {required}")]
    SegmentCoverage {
        segment: usize,
        points: usize,
        required: usize,
    },

    #[error("signature map conflict on key `{0}`: tied majority")]
    SignatureConflict(String),

    #[error("voyage `{0}` has no points in any discriminative segment")]
    Unclassifiable(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
