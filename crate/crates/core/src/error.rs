//! Error type shared by all modules.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("bad magic: expected \"EMB1\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },

    #[error("duplicate id {id:?} at row {row}")]
    DuplicateId { id: String, row: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("unknown document id {0:?}")]
    UnknownDocId(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
