use std::fmt;
use std::io;

use radgen_tensor::TensorError;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse error class, used by the command line to pick an exit status.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or arguments.
    Usage,
    /// Missing, malformed or corrupt input data.
    Data,
    /// Non-finite values or degenerate numerics.
    Numeric,
}

#[derive(Debug)]
pub enum Error {
    /// Invalid configuration value.
    Config(String),
    /// Shape or contract violation from the tensor engine.
    Tensor(TensorError),
    /// Input data violates a documented format or invariant.
    Data(String),
    /// Stored bytes fail their checksum or are truncated.
    Integrity {
        tensor: String,
        detail: String,
    },
    /// Training produced a non-finite loss.
    NonFiniteLoss {
        batch_ids: Vec<String>,
    },
    /// A statistic cannot be computed from degenerate input.
    Degenerate(String),
    Io {
        path: String,
        source: io::Error,
    },
    Json(serde_json::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Self::Config(_) => ErrorClass::Usage,
            Self::Tensor(_) | Self::Data(_) | Self::Integrity { .. } | Self::Io { .. } | Self::Json(_) => {
                ErrorClass::Data
            }
            Self::NonFiniteLoss { .. } | Self::Degenerate(_) => ErrorClass::Numeric,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "configuration error: {msg}"),
            Self::Tensor(e) => write!(f, "{e}"),
            Self::Data(msg) => write!(f, "data error: {msg}"),
            Self::Integrity { tensor, detail } => {
                write!(f, "integrity error in {tensor}: {detail}")
            }
            Self::NonFiniteLoss { batch_ids } => {
                write!(f, "non-finite loss on batch {}", batch_ids.join(","))
            }
            Self::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Self::Io { path, source } => write!(f, "{path}: {source}"),
            Self::Json(e) => write!(f, "json: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Tensor(e) => Some(e),
            Self::Io { source, .. } => Some(source),
            Self::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<TensorError> for Error {
    fn from(e: TensorError) -> Self {
        Self::Tensor(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Self::Json(e)
    }
}
