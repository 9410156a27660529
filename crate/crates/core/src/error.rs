use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A column, factor, block or level that the input does not declare.
    #[error("schema error: {0}")]
    Schema(String),

    /// Malformed or invalid data, located by its line in the input.
    #[error("data error at line {line}: {message}")]
    Data { line: u64, message: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    /// A contingency table with an empty row or column margin.
    #[error("degenerate table: {0}")]
    DegenerateTable(String),

    /// Caller broke an API precondition (dimension mismatch, too few draws, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("sampler initialization failed: {0}")]
    Initialization(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("non-finite deviance: {0}")]
    NonFiniteDeviance(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(line: u64, message: impl Into<String>) -> Self {
        Error::Data {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }
}
