use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor extents do not fit the operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid configuration (divisibility, window size, head count, ...).
    #[error("config error: {0}")]
    Config(String),

    #[error("parameter `{0}` not found")]
    MissingParam(String),

    #[error("parameter `{0}` registered twice")]
    DuplicateParam(String),

    /// Checkpoint does not match the model being restored.
    #[error("checkpoint mismatch: missing {missing:?}, unexpected {unexpected:?}")]
    CheckpointMismatch {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },

    /// Training aborted on a non-finite loss value.
    #[error("non-finite loss in term `{term}` on sample {sample_id} at step {step}")]
    NonFiniteLoss {
        term: String,
        sample_id: u64,
        step: u64,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// CLI exit code: 2 for configuration problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}
