use std::path::{Path, PathBuf};

use basil_core::BasilError;

/// Errors surfaced by the command-line tool, each mapped to an exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{}:{line}{}: {message}", path.display(), column.as_ref().map(|c| format!(" (column {c})")).unwrap_or_default())]
    Parse { path: PathBuf, line: u64, column: Option<String>, message: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Model(#[from] BasilError),
}

impl CliError {
    /// 2 for usage and validation failures, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Model(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn parse(path: &Path, line: u64, column: Option<String>, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.to_path_buf(), line, column, message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
