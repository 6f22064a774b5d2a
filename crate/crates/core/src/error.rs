use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// The variants map onto the CLI exit codes: parameter and configuration
/// problems exit with 2, data problems with 3.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A combination of parameters cannot be executed (e.g. k larger than a subsample).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates a precondition (nonpositive value to a log fit, bad CSV cell, ...).
    #[error("data error: {0}")]
    Data(String),

    /// An internal contract was broken by the caller.
    #[error("logic error: {0}")]
    Logic(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Config(_) | Error::Logic(_) => 2,
            Error::Data(_) | Error::Io { .. } | Error::Serialization(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
