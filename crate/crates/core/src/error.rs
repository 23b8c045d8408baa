use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("duplicate example id {0:?}")]
    DuplicateId(String),

    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("augmentation failed for class {class:?} (source {source_id:?}): {cause}")]
    Augmentation {
        class: String,
        source_id: String,
        cause: ProviderError,
    },

    #[error("training diverged at batch {batch}: {message}")]
    Training { batch: usize, message: String },

    #[error("model incompatible: {0}")]
    Compatibility(String),

    #[error("cannot load artifact: {0}")]
    Load(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad input (usage, validation, parse), as
    /// opposed to runtime failures.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Argument(_)
                | Error::DuplicateId(_)
                | Error::Compatibility(_)
        )
    }
}

/// Failure reported by a paraphrase provider.
#[derive(Debug, Clone, Error)]
pub enum ProviderError {
    #[error("provider request failed after {attempts} attempt(s): {message}")]
    Exhausted { attempts: u32, message: String },

    #[error("provider returned an empty response")]
    EmptyResponse,

    #[error("provider response could not be decoded: {0}")]
    Malformed(String),

    #[error("provider misconfigured: {0}")]
    Config(String),
}
