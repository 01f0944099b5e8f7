use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// `NoData` is kept separate from `InvalidArgument`: it marks inputs that are
/// well-formed but too short or too sparse for a statistic to exist, which
/// callers usually want to record as a missing value rather than a failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u32,
        column: u32,
        message: String,
    },

    #[error("semantic error: {0}")]
    Semantic(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn no_data(msg: impl Into<String>) -> Self {
        Error::NoData(msg.into())
    }

    pub fn is_no_data(&self) -> bool {
        matches!(self, Error::NoData(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
