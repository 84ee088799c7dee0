use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not satisfy an operation's shape rule.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A value lies outside the domain an operation accepts.
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke an API contract (wrong task, non-scalar loss, ...).
    #[error("contract error: {0}")]
    Contract(String),

    #[error("malformed file name {name:?}: {reason}")]
    MalformedName { name: String, reason: String },

    #[error("cannot decode image {path:?}: {reason}")]
    ImageDecode { path: PathBuf, reason: String },

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    TrainingDiverged { epoch: usize, loss: f32 },

    #[error("all {0} grid cells failed")]
    SearchExhausted(usize),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("{path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path:?}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Failures specific to reading a checkpoint file.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes {0:?}, expected \"FCKP\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("invalid checkpoint header: {0}")]
    Header(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
