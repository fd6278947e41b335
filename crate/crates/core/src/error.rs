use std::path::PathBuf;

use thiserror::Error;

/// Broad failure classes, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Caller passed an argument outside the operation's domain.
    InvalidArgument,
    /// Filesystem failure or a malformed / inconsistent file.
    Format,
    /// The numerics could not produce a result (zero matrix, collapse, non-finite data).
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic at byte offset {offset}: expected {expected:?}, found {found:?}")]
    BadMagic {
        offset: usize,
        expected: &'static str,
        found: String,
    },

    #[error("truncated payload at byte offset {offset}: needed {needed} bytes, only {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("unsupported dtype code {code} at byte offset {offset}")]
    BadDtype { offset: usize, code: u8 },

    #[error("non-finite value at byte offset {offset}")]
    NonFiniteValue { offset: usize },

    #[error("{extra} trailing bytes at byte offset {offset}: declared dims disagree with file length")]
    TrailingBytes { offset: usize, extra: usize },

    #[error("invalid header at byte offset {offset}: {message}")]
    BadHeader { offset: usize, message: String },

    #[error("invalid metadata at byte offset {offset}: {message}")]
    Metadata { offset: usize, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("{0} is identically zero")]
    ZeroInput(&'static str),

    #[error("power iteration collapsed: {0}")]
    Collapse(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::BadDtype { .. }
            | Error::NonFiniteValue { .. }
            | Error::TrailingBytes { .. }
            | Error::BadHeader { .. }
            | Error::Metadata { .. }
            | Error::Parse { .. }
            | Error::Io { .. }
            | Error::DimensionMismatch { .. } => ErrorKind::Format,
            Error::InvalidArgument(_) => ErrorKind::InvalidArgument,
            Error::NonFinite(_) | Error::ZeroInput(_) | Error::Collapse(_) => ErrorKind::Numeric,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
