//! Error type shared across the crate.
//!
//! Every failure is classified into one of four broad categories so that the
//! command line front end can map it onto a stable exit code: config errors
//! (1), data errors (2), and numerical failures (3). Anything that succeeds
//! exits 0.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shape of two operands does not satisfy the operation's contract.
    #[error("shape mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    /// A row that must have a nonzero norm (cosine similarity operand) is zero.
    #[error("zero-norm row {row} in {side} operand of {op}")]
    ZeroNormRow {
        op: &'static str,
        side: &'static str,
        row: usize,
    },

    /// Invalid configuration value or malformed config file.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    /// Non-finite values, failed gradient checks, diverged training.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File system problem tied to a specific path.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::ShapeMismatch { .. } => 1,
            Error::Data(_) | Error::Io { .. } => 2,
            Error::Numerical(_) | Error::ZeroNormRow { .. } => 3,
        }
    }
}
