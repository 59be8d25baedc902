//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad arguments, bad configuration, or data that violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Input file does not match the expected column schema.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// A treatment arm is empty where both arms are required.
    #[error("empty arm: {0}")]
    EmptyArm(String),

    /// No observational rows fall inside the RCT covariate support.
    #[error("no support overlap between RCT and observational covariates")]
    NoSupportOverlap,

    /// A solver failed in a way that cannot be recovered by a fallback.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
