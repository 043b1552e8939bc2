use alloc::string::String;

use crate::embedding::SampleId;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate input: {reason} (sample {id:?})")]
    Degenerate { id: Option<SampleId>, reason: String },
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn degenerate(id: Option<SampleId>, reason: impl Into<String>) -> Self {
        Error::Degenerate {
            id,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
