use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}:{line}: malformed line: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("dangling {kind} reference: `{id}`")]
    DanglingReference { kind: &'static str, id: String },

    #[error("out of range: {0}")]
    Range(String),

    #[error("capacity exhausted: {0}")]
    Capacity(String),

    #[error("constraint error: {0}")]
    Constraint(String),

    #[error("training diverged at batch {batch}: {reason}")]
    Training { batch: usize, reason: String },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("I/O error on {path}: {cause}")]
    Io { path: PathBuf, cause: std::io::Error },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, cause: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            cause,
        }
    }

    /// Process exit code for the command-line driver: 2 for configuration
    /// problems, 3 for data problems, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Range(_) => 2,
            Error::Training { .. }
            | Error::Degenerate(_)
            | Error::UndefinedMetric(_)
            | Error::Domain(_) => 4,
            _ => 3,
        }
    }
}
