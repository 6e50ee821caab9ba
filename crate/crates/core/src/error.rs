use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand extents do not fit the operation.
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate batch: batchnorm needs at least 2 values per channel, got {0}")]
    DegenerateBatch(usize),

    #[error("non-finite value at coordinate {index}")]
    NonFinite { index: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: {what} is not finite")]
    Divergence { epoch: usize, batch: usize, what: &'static str },

    #[error("leakage guard: {0}")]
    Leakage(String),

    #[error("parse error in {path}: line {line}, column {column}: {msg}")]
    Parse { path: PathBuf, line: usize, column: usize, msg: String },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension { op, detail: detail.into() }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Dimension { .. } => 2,
            Error::Parse { .. }
            | Error::Integrity(_)
            | Error::Validation(_)
            | Error::Io { .. }
            | Error::DegenerateBatch(_)
            | Error::NonFinite { .. } => 3,
            Error::Divergence { .. } | Error::Leakage(_) => 4,
        }
    }
}
