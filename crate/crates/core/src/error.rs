use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // simplex
    #[error("composition needs at least 2 parts, got {0}")]
    DimensionTooSmall(usize),
    #[error("part {index} is not strictly positive ({value})")]
    NonPositivePart { index: usize, value: f64 },
    #[error("parts sum to {sum}, expected {kappa}")]
    NotClosed { sum: f64, kappa: f64 },
    #[error("closure constant must be positive and finite, got {0}")]
    InvalidKappa(f64),
    #[error("closure constants differ: {0} vs {1}")]
    KappaMismatch(f64, f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    // weights
    #[error("grid side must be at least 2, got {0}")]
    SideTooSmall(usize),
    #[error("self loop at unit {0}")]
    SelfLoop(usize),
    #[error("index {index} out of range for {n} units")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    // model / estimation
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unstable spatial filter: spectral radius {radius:.6} >= {bound:.6}")]
    Unstable { radius: f64, bound: f64 },
    #[error("linear solve failed: {0}")]
    SolveFailed(String),
    #[error("log-determinant is not finite")]
    NonFiniteLogDet,
    #[error("singular design: {0}")]
    SingularDesign(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    // io
    #[error("missing cell: region {region}, time {time}, part {part}")]
    MissingCell { region: String, time: String, part: String },
    #[error("zero part: region {region}, time {time}, part {part}")]
    ZeroPart { region: String, time: String, part: String },
    #[error("time steps are not equidistant: {0}")]
    RaggedTimes(String),
    #[error("alignment: {0}")]
    Alignment(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            Unstable { .. } | SolveFailed(_) | NonFiniteLogDet | SingularDesign(_) => {
                ErrorKind::Numeric
            }
            Io { .. } | Csv(_) | Json(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), msg: msg.into() }
    }
}
