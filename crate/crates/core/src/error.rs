use thiserror::Error;

/// Errors produced by the solvers, generators and data model.
#[derive(Debug, Error)]
pub enum OtError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("vector is not on the probability simplex: {0}")]
    NotOnSimplex(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("instance too large for the exact oracle: n = {n} exceeds limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl OtError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        OtError::InvalidInput(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        OtError::InvalidParameter(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        OtError::Numeric(msg.into())
    }

    /// True for failures caused by the numerics rather than by the input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, OtError::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, OtError>;
