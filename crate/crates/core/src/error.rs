use thiserror::Error;

/// Errors raised across the recovery toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("unsupported operator: {0}")]
    UnsupportedOperator(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("decomposition did not converge: {0}")]
    NoConvergence(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
