use thiserror::Error;

#[derive(Debug, Error)]
pub enum QaaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("eigensolver failed to converge (matrix max-norm {norm:.6e})")]
    NoConvergence { norm: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl QaaError {
    /// True for errors caused by bad configuration rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, QaaError::InvalidInput(_) | QaaError::DimensionMismatch { .. })
    }
}

pub type Result<T> = std::result::Result<T, QaaError>;
