//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by corpus loading, dataset generation and evaluation.
#[derive(Debug, Error)]
pub enum ForgeError {
    /// A manifest or shard line failed to parse.
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A record parsed but violates a schema constraint.
    #[error("{path}:{line}: invalid {field}: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    /// A value violates a domain invariant (no file context).
    #[error("invalid {what}: {message}")]
    Invalid { what: String, message: String },

    /// Pseudo-label corpus references images absent from the base corpus.
    #[error("pseudo-label corpus references unknown image ids: {}", ids.join(", "))]
    OrphanImages { ids: Vec<String> },

    /// An attribute lookup referenced a class with no computed thresholds.
    #[error("no size thresholds for class '{class}'")]
    UnknownClass { class: String },

    /// A box covered no raster pixels.
    #[error("box covers no pixels of {image}")]
    EmptyRegion { image: String },

    /// Chat-completion request failed after retries.
    #[error("chat service error: {0}")]
    Chat(String),

    /// Configuration problem.
    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to decode image {path}: {source}")]
    ImageDecode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl ForgeError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        ForgeError::Io {
            context: context.into(),
            source,
        }
    }

    pub fn invalid(what: impl Into<String>, message: impl Into<String>) -> Self {
        ForgeError::Invalid {
            what: what.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ForgeError>;
