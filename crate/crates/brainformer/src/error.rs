use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the std layer. [`AppError::exit_code`] maps them onto
/// the stable CLI contract: 2 for usage and configuration problems, 1 for
/// everything that went wrong while running.
#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] brainformer_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: at `{field}`: {message}")]
    Config {
        path: PathBuf,
        field: String,
        message: String,
    },
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

pub type AppResult<T> = std::result::Result<T, AppError>;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use brainformer_core::Error as E;
        match self {
            AppError::Core(E::Config(_) | E::Usage(_) | E::Input(_)) => 2,
            AppError::Config { .. } | AppError::Usage(_) => 2,
            AppError::Core(_) | AppError::Io { .. } | AppError::Runtime(_) => 1,
        }
    }
}
