use std::path::PathBuf;

use mou_autograd::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MouError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error in `{key}`: {detail}")]
    Config { key: String, detail: String },
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {detail}", path.display())]
    Parse { path: PathBuf, line: u64, detail: String },
    #[error("{}:{line}: missing value in column `{column}`", path.display())]
    MissingValue { path: PathBuf, line: u64, column: String },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Training { epoch: usize, step: usize, detail: String },
}

impl MouError {
    pub fn config(key: impl Into<String>, detail: impl Into<String>) -> Self {
        MouError::Config { key: key.into(), detail: detail.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MouError::Io { path: path.into(), source }
    }

    /// Whether the error stems from invalid user input rather than a
    /// failure while running.
    pub fn is_config(&self) -> bool {
        matches!(self, MouError::Config { .. } | MouError::Io { .. } | MouError::Parse { .. } | MouError::MissingValue { .. })
    }
}

pub type Result<T> = std::result::Result<T, MouError>;
