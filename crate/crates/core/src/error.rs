use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("iterative solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("quadrature target {target:e} not reached (last difference {achieved:e})")]
    AccuracyNotReached { target: f64, achieved: f64 },

    #[error("heat kernel outside truncation validity window at t = {t} (boundary mass {boundary_mass:e})")]
    ValidityWindow { t: f64, boundary_mass: f64 },

    #[error("pivot {index} is within the zero band ({value:e}); coupling is at a counting threshold")]
    ThresholdProximity { index: usize, value: f64 },

    #[error("missing Green value for pair ({0}, {1})")]
    MissingGreenValue(String, String),

    #[error("sparse-set construction stopped after accepting {accepted} of {requested} vertices ({scanned} candidates scanned): {reason}")]
    SparseSetIncomplete { requested: usize, accepted: usize, scanned: usize, reason: String },

    #[error("potential is not monotone on the interval")]
    NonMonotone,

    #[error("resolution rule violated: grid step {h} must be below {limit}")]
    Resolution { h: f64, limit: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
