use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite")]
    NotSpd,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("Wishart shape {shape} too small for dimension {dim} (need 2c >= r)")]
    DegreesOfFreedomTooSmall { shape: f64, dim: usize },
    #[error("parameter must be strictly positive, got {0}")]
    NonPositiveParameter(f64),
    #[error("invalid distribution parameters: {0}")]
    InvalidParameters(String),
    #[error("every log-weight is -inf")]
    AllWeightsDegenerate,
    #[error("argument outside the function domain: {0}")]
    Domain(String),
    #[error("column {0} has zero range")]
    ZeroRangeColumn(usize),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no iterations with the estimated number of non-empty components")]
    NoRetainedIterations,
    #[error("no identified draws are available")]
    NoIdentifiedDraws,
    #[error("cluster {cluster} has {size} members, needs at least {needed}")]
    DegenerateCluster { cluster: usize, size: usize, needed: usize },
    #[error("cannot match {left} estimated components to {right} reference components")]
    MatchingCardinalityMismatch { left: usize, right: usize },
    #[error("archive was not produced under the normal-gamma prior")]
    NotNormalGammaRun,
    #[error("allocations were not stored in the archive")]
    AllocationsNotStored,
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("built-in dataset `{name}` failed checksum validation")]
    ChecksumMismatch { name: String },
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("archive format error in {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotSpd => "not_spd",
            Error::NotSymmetric(_) => "not_symmetric",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::DegreesOfFreedomTooSmall { .. } => "degrees_of_freedom_too_small",
            Error::NonPositiveParameter(_) => "non_positive_parameter",
            Error::InvalidParameters(_) => "invalid_parameters",
            Error::AllWeightsDegenerate => "all_weights_degenerate",
            Error::Domain(_) => "domain",
            Error::ZeroRangeColumn(_) => "zero_range_column",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidConfig(_) => "invalid_config",
            Error::NoRetainedIterations => "no_retained_iterations",
            Error::NoIdentifiedDraws => "no_identified_draws",
            Error::DegenerateCluster { .. } => "degenerate_cluster",
            Error::MatchingCardinalityMismatch { .. } => "matching_cardinality_mismatch",
            Error::NotNormalGammaRun => "not_normal_gamma_run",
            Error::AllocationsNotStored => "allocations_not_stored",
            Error::UnknownDataset(_) => "unknown_dataset",
            Error::ChecksumMismatch { .. } => "checksum_mismatch",
            Error::Parse { .. } => "parse",
            Error::AtIteration { source, .. } => source.kind(),
            Error::Format { .. } => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
