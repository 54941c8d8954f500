use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or size disagreement between inputs and model parameters.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Rejected argument values (negative counts, empty splits, bad configs).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Non-finite losses, divergence, or failed numeric procedures.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
