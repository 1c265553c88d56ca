use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AppError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AppError {
    /// Bad flags, bad config values or unmet preconditions detected before running.
    #[error("{0}")]
    Usage(String),
    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("dataset not found: {0}")]
    DatasetNotFound(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] dml_s2r_core::Error),
    #[error("{0}")]
    Runtime(String),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        let path = path.into();
        if source.kind() == io::ErrorKind::NotFound {
            AppError::MissingFile(path)
        } else {
            AppError::Io { path, source }
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        AppError::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 2 for usage and configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use dml_s2r_core::Error as E;
        match self {
            AppError::Usage(_) | AppError::MissingFile(_) | AppError::DatasetNotFound(_) => 2,
            AppError::Core(E::InvalidConfig(_) | E::Precondition(_)) => 2,
            _ => 1,
        }
    }
}
