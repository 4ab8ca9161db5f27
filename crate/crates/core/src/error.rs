use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LfnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LfnError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("index {index} out of range for dimension of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("insufficient history: need at least {needed} values, have {have}")]
    InsufficientHistory { needed: usize, have: usize },

    #[error("insufficient samples: need at least {needed} per group, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("steady state not reached within {max_steps} steps")]
    NonConvergence { max_steps: usize },

    #[error("invalid config field `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("dimension mismatch between {first} and {second}: {detail}")]
    DimensionMismatch {
        first: String,
        second: String,
        detail: String,
    },

    #[error("industry {0} holds no positions")]
    EmptyIndustry(usize),

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LfnError {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        LfnError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LfnError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        LfnError::Parse {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
