use thiserror::Error;

/// Errors produced by the embedding pipeline.
#[derive(Debug, Error)]
pub enum GlleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("numerical failure at iteration {iteration}, point {point}: {detail}")]
    NumericalFailure {
        iteration: usize,
        point: usize,
        detail: String,
    },

    #[error("parse error at line {line}: {detail}")]
    Parse { line: u64, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GlleError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(GlleError::InvalidArgument(msg.into()))
}
