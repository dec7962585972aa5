use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// A required input artifact does not exist.
    #[error("{what} not found: {}", path.display())]
    Missing { what: &'static str, path: PathBuf },
    #[error("usage: {0}")]
    Usage(String),
    /// Input data exists but is malformed or inconsistent.
    #[error("invalid input {}: {message}", path.display())]
    Invalid { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] graphshield_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Missing { .. } | CliError::Usage(_) => 2,
            CliError::Core(graphshield_core::Error::Config(_)) => 2,
            CliError::Core(graphshield_core::Error::NotTrained) => 2,
            CliError::Invalid { .. } | CliError::Io { .. } | CliError::Core(_) => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}
