use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: bad model file: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: corrupt model file: {msg}")]
    Corrupt { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: incompatible data: {msg}")]
    Data { path: PathBuf, msg: String },

    #[error("verification failed: {0}")]
    Verify(String),

    #[error(transparent)]
    Core(#[from] stn_core::Error),
}

impl CliError {
    /// 1 for mistakes in how the tool was invoked, 2 for everything the
    /// inputs or data caused.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 1,
            Self::Core(stn_core::Error::Argument(_)) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
