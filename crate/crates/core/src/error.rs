use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset contains no atoms")]
    EmptyDataset,
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("{0}")]
    Load(String),
    #[error("invalid operation: {0}")]
    InvalidOperation(String),
    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },
    #[error("invalid selector parameter: {0}")]
    InvalidParameter(String),
    #[error("no dataset loaded")]
    NoDataset,
    #[error("script line {line}: {message}")]
    Script { line: usize, message: String },
    #[error("remote: {0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
