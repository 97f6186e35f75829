use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    /// An argument falls outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A truncation parameter is too small for an exact result.
    #[error("truncation error: {0}")]
    Truncation(String),

    /// An iterative or series evaluation failed to settle.
    #[error("non-convergence: {0}")]
    NonConvergence(String),

    /// Two routes that must agree produced different answers.
    #[error("inconsistency: {0}")]
    Inconsistency(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Domain(msg.into()))
}
