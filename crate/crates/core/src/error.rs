use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad class of a failure, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or user input.
    Config,
    /// Input data is malformed or unusable.
    Data,
    /// A numerical routine failed (non-finite values, no convergence).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in field `{field}`: {reason}")]
    Format { field: String, reason: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid spec: {0}")]
    Spec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("region `{0}` has no cells with sufficient land fraction")]
    EmptyRegion(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("series too short: need at least {needed} months, got {actual}")]
    TooShort { needed: usize, actual: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("misaligned inputs: {0}")]
    Misaligned(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Spec(_) | Error::Config(_) => ErrorClass::Config,
            Error::NonFinite(_) | Error::Numerical(_) => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}
