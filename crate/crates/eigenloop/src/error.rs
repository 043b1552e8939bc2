use std::path::PathBuf;

use eigenloop_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid config at `{field}`: {message}")]
    Config { field: String, message: String },
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        AppError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        AppError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 config, 3 data, 4 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config { .. } => 2,
            AppError::Core(CoreError::Config { .. }) => 2,
            AppError::Core(CoreError::Training { .. }) => 4,
            _ => 3,
        }
    }

    /// Config field path, when the error has one.
    pub fn field(&self) -> Option<&str> {
        match self {
            AppError::Config { field, .. } => Some(field),
            AppError::Core(CoreError::Config { field, .. }) => Some(field),
            _ => None,
        }
    }
}
