use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("operation undefined for the zero matrix: {0}")]
    ZeroMatrix(&'static str),

    /// A sampling budget that would push some keep-probability above 1.
    #[error("sampling budget m = {m} is infeasible: entry ({row}, {col}) would be kept with probability {prob}")]
    Infeasible {
        m: f64,
        row: usize,
        col: usize,
        prob: f64,
    },

    #[error("SVD failed to converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// A deterministic per-trial guarantee failed; the run is aborted.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
