//! Error type shared across the crate.

use std::path::PathBuf;

/// Errors produced by loading, configuration, and numeric routines.
#[derive(Debug, thiserror::Error)]
pub enum EchoError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {file} at line {line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl EchoError {
    /// Process exit code category for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            EchoError::Config(_) | EchoError::Argument(_) => 2,
            EchoError::MissingFile(_) | EchoError::Io { .. } => 3,
            EchoError::Parse { .. } | EchoError::Integrity(_) => 4,
            EchoError::Numeric(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, EchoError>;
