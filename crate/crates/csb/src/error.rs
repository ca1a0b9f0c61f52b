use thiserror::Error;

#[derive(Debug, Error)]
pub enum CsbError {
    /// A caller-supplied value violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A numeric operation failed (singular system, divergent solve, ...).
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CsbError>;

impl CsbError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        CsbError::InvalidInput(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CsbError::Numeric(msg.into())
    }
}
