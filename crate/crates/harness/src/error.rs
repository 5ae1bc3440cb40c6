use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Process exit code for rejected flags, configs or inconsistent inputs.
pub const EXIT_USAGE: i32 = 2;
/// Process exit code for unreadable or unwritable files.
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] nisac_core::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: nisac_core::Error,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) | HarnessError::Config { .. } | HarnessError::Core(_) => {
                EXIT_USAGE
            }
            HarnessError::File { .. } | HarnessError::Io { .. } | HarnessError::Csv(_) => EXIT_IO,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>) -> impl FnOnce(nisac_core::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::File { path, source }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Self {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
