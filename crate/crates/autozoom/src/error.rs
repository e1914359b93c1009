//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A domain rule was violated (bad parameter, invariant breach, ...).
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Track bootstrap needs three score-valid key-frame detections.
    #[error("track bootstrap failed: found {found} valid key-frame detections, need 3")]
    Bootstrap { found: usize },

    #[error("detector unavailable: {0}")]
    DetectorUnavailable(String),

    #[error("track has no entry for frame {0}")]
    Coverage(usize),

    #[error("checkpoint mismatch: {0}")]
    Checkpoint(String),

    /// A recorded gradient graph was walked twice.
    #[error("gradient graph already consumed")]
    GraphConsumed,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Process exit code class: 1 for i/o and environment trouble,
    /// 2 for validation and domain errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::DetectorUnavailable(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
