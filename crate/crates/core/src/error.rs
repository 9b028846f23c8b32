use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient pairs: no unit carries two or more ratings")]
    InsufficientPairs,
    #[error("degenerate distribution: every pairable rating has the same value")]
    DegenerateDistribution,
    #[error("training data contains a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl std::fmt::Display) -> Self {
        Error::Parse {
            line,
            message: msg.to_string(),
        }
    }
}
