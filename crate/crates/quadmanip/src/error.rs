use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    /// Malformed input, already prefixed with `file:line:col`.
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Validation(String),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    /// Process exit code: 4 for I/O, 3 for anything the user must fix in their inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 4,
            Error::Parse(_) | Error::Validation(_) | Error::Config(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
