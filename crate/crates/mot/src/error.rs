use std::path::PathBuf;

use mot_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    /// Transport-level failure that survived every retry.
    #[error("request failed after {attempts} attempts: {message}")]
    Retriable { attempts: u32, message: String },
    /// The remote answered with something that does not follow the protocol.
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend configuration error: {0}")]
    Configuration(String),
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("internal backend error: {0}")]
    Internal(String),
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl From<CoreError> for BackendError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Configuration(m) => BackendError::Configuration(m),
            other => BackendError::Precondition(other.to_string()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Load {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupted file: {0}")]
    Corruption(String),
    #[error("{failed} of {total} items failed; aborting")]
    TooManyFailures { failed: usize, total: usize },
    #[error("misaligned inputs: {0}")]
    Mismatch(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for configuration problems, 2 for file and
    /// format problems, 3 for model backend failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Mismatch(_) => 1,
            Error::Core(CoreError::Configuration(_) | CoreError::Precondition(_)) => 1,
            Error::Core(CoreError::Domain(_)) => 1,
            Error::Io { .. } | Error::Load { .. } | Error::Format(_) | Error::Corruption(_) => 2,
            Error::Backend(BackendError::Configuration(_)) => 1,
            Error::Backend(_) | Error::TooManyFailures { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
