//! Crate-wide error type. Variants map onto the three failure classes the
//! tools distinguish: I/O trouble, malformed data, and caller mistakes
//! (bad shapes or configuration).

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Input data that does not match its declared format.
    #[error("format error: {0}")]
    Format(String),

    /// Tensor or grid dimensions that do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid configuration supplied by the caller.
    #[error("invalid config: {0}")]
    Config(String),

    /// Training blew up; carries enough context to reproduce.
    #[error("training diverged at step {step}: total loss {total:.3e}")]
    Diverged { step: usize, total: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
