use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("i/o failure on {path}: {message}")]
    IoFailure { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: gaussbsde_core::Error,
    },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Self::IoFailure {
            path: path.into(),
            message: err.to_string(),
        }
    }

    pub fn core(context: impl Into<String>, source: gaussbsde_core::Error) -> Self {
        Self::Core {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
