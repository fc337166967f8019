//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, ScdmError>;

#[derive(Debug, Error)]
pub enum ScdmError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed container: {0}")]
    Container(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("filter design failed: {0}")]
    Filter(String),

    #[error("zero-variance channel {0}")]
    ZeroVariance(String),

    #[error("non-finite values: {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Divergence(String),
}

impl ScdmError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        ScdmError::Invalid(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        ScdmError::Shape(msg.into())
    }
}
