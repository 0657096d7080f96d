//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model construction, data ingestion, optimization
/// and simulation. Each variant maps to a stable CLI error category so
/// scripts can branch on exit status.
#[derive(Debug, Error)]
pub enum Error {
    /// A domain invariant was violated (bad parameter, inconsistent shape).
    #[error("validation: {0}")]
    Validation(String),

    /// Building or controller configuration file problem, anchored to a line.
    #[error("config {path}:{line}: {msg}")]
    Config {
        path: String,
        line: usize,
        msg: String,
    },

    /// Market/forecast data problem (schema, gaps, underruns).
    #[error("data: {0}")]
    Data(String),

    /// Numerical failure (singular factorization, solver stall).
    #[error("numeric: {0}")]
    Numeric(String),

    /// I/O failure with the offending path.
    #[error("io {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Machine-readable error category, used for CLI exit codes.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Config { .. } => "config",
            Error::Data(_) => "data",
            Error::Numeric(_) => "numeric",
            Error::Io { .. } => "io",
        }
    }

    /// CLI exit code for this category (0 is success, 1 generic, 2 usage).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 3,
            Error::Config { .. } => 4,
            Error::Data(_) => 5,
            Error::Numeric(_) => 6,
            Error::Io { .. } => 7,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
