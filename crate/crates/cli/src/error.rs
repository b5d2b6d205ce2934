use std::path::PathBuf;

use gpp_extremes::ErrorClass;

/// Everything that can stop a command. Each variant maps to one exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot parse config {path}: {source}")]
    ConfigParse {
        path: PathBuf,
        source: serde_json::Error,
    },

    #[error("no checkpoint for {region} {period} at {path}; run `gppx train` with this config first")]
    MissingCheckpoint {
        region: String,
        period: String,
        path: PathBuf,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] gpp_extremes::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 is success; 1 usage or configuration; 2 data; 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::ConfigParse { .. } => 1,
            CliError::MissingCheckpoint { .. } | CliError::Io { .. } => 2,
            CliError::Core(e) => match e.class() {
                ErrorClass::Config => 1,
                ErrorClass::Data => 2,
                ErrorClass::Numerical => 3,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
