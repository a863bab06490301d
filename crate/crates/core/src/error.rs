use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, IqaError>;

#[derive(Debug, Error)]
pub enum IqaError {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("score {score} outside the documented range [{lo}, {hi}] for {dataset}")]
    OutOfRange {
        dataset: String,
        score: f64,
        lo: f64,
        hi: f64,
    },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(&'static str),

    #[error("numerical abort at epoch {epoch}, batch {batch}: {reason}")]
    Numerical {
        epoch: usize,
        batch: usize,
        reason: String,
    },
}

impl IqaError {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        IqaError::Shape {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        IqaError::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IqaError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> u8 {
        match self {
            IqaError::Config(_) => 1,
            IqaError::Numerical { .. } | IqaError::NonFiniteGradient(_) => 3,
            _ => 2,
        }
    }
}
