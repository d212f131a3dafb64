use std::path::PathBuf;

use thiserror::Error;

/// Failures that stop a run before any solver is reached.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },

    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

impl CliError {
    pub(crate) fn field(field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Field { field: field.into(), message: message.to_string() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}
