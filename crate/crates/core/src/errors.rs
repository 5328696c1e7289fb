//! Error types shared across the crate.

use std::collections::BTreeMap;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an operation's inputs was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration failed validation. Each entry is one violation.
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    /// The selected backend does not support the requested capability.
    #[error("backend does not support {capability}")]
    CapabilityMissing { capability: &'static str },

    /// An HTTP backend could not be reached or returned a transport error.
    #[error("backend unreachable at {url}: {detail}")]
    BackendUnreachable { url: String, detail: String },

    /// An HTTP backend answered, but not with the expected payload.
    #[error("bad response from {url}: {detail}")]
    BadResponse { url: String, detail: String },

    /// Generation produced no usable output after exhausting retries.
    #[error("generation failed: {0}")]
    GenerationFailed(String),

    /// Classifier call failed while scoring a corpus; carries the index of
    /// the sentence that failed.
    #[error("classifier failed on item {index}: {source}")]
    ClassifierFailed {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// Power iteration did not converge; carries the last iterate so callers
    /// can inspect how far it got.
    #[error(
        "graph ranking did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    RankingDidNotConverge {
        iterations: usize,
        residual: f64,
        last_iterate: BTreeMap<String, f64>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
