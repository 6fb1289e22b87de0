use std::path::PathBuf;

use thiserror::Error;

/// Coarse failure classification, used by binaries to pick an exit code
/// (1 usage, 2 data, 3 internal).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The caller asked for something impossible (bad flag, bad config).
    Usage,
    /// The input data violated a contract (unreadable file, bad row, short series).
    Data,
    /// An internal invariant broke; always a bug.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Input data that parsed but violates a domain invariant.
    #[error("{0}")]
    InvalidData(String),

    /// A configuration or parameter outside its documented domain.
    #[error("{0}")]
    InvalidConfig(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    /// Wraps a failure with the pipeline stage that produced it.
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } | Error::Parse { .. } | Error::InvalidData(_) => ErrorClass::Data,
            Error::InvalidConfig(_) => ErrorClass::Usage,
            Error::Internal(_) => ErrorClass::Internal,
            Error::Stage { source, .. } => source.class(),
        }
    }

    /// Tag this error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The outermost stage tag, if any.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
