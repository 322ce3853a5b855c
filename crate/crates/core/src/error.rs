use thiserror::Error;

/// Errors raised by the solver, tracker and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("power iteration did not converge within {iterations} iterations (best estimate {best})")]
    NoConvergence { iterations: usize, best: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("ground truth required for {0}")]
    MissingGroundTruth(&'static str),

    #[error("all eigenvalues are below the numerical-rank cutoff")]
    RankDeficient,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn mismatch(context: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
