use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: expected length {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite gradient entry in layer {layer}")]
    NonFiniteGradient { layer: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("action index {action} out of range (action count {count})")]
    InvalidAction { action: usize, count: usize },

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("{path}: line {line}: {msg}")]
    Format {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dataset environment mismatch: file holds `{found}` data, run is configured for `{expected}`")]
    EnvMismatch { expected: String, found: String },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        Error::DimMismatch {
            what,
            expected,
            got,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
