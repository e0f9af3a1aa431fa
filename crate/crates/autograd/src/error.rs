use thiserror::Error;

/// Failure raised by a tensor operation. Every variant carries the name of
/// the operation that produced it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("{op}: invalid argument: {detail}")]
    Argument { op: &'static str, detail: String },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
}

impl TensorError {
    pub fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Dimension { op, detail: detail.into() }
    }

    pub fn arg(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::Argument { op, detail: detail.into() }
    }

    /// Name of the operation that failed.
    pub fn op(&self) -> &'static str {
        match self {
            TensorError::Dimension { op, .. }
            | TensorError::Argument { op, .. }
            | TensorError::NonFinite { op } => op,
        }
    }
}

pub type Result<T> = std::result::Result<T, TensorError>;
