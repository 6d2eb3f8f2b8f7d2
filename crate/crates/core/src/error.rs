use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Training produced a non-finite loss. `trace` holds the total loss of
    /// every completed epoch before the failure.
    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        trace: Vec<f64>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, MarsError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(MarsError::DimensionMismatch(msg.into()))
}
