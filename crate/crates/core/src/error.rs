use thiserror::Error;

/// Errors raised by the segmentation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument or index lies outside its admissible range.
    #[error("range error: {0}")]
    Range(String),

    /// Configuration is inconsistent or violates a documented invariant.
    #[error("configuration error: {0}")]
    Config(String),

    /// An input does not satisfy an operation's precondition.
    #[error("contract error: {0}")]
    Contract(String),

    /// The theorem comparison would be vacuous for the given parameters.
    #[error("refused: {0}")]
    Refused(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn range<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Range(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
