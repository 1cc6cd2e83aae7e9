use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid shapes, parameters, or configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// A weight archive or other binary input failed to parse or verify.
    #[error("format error: {0}")]
    Format(String),

    /// A weight archive is valid but lacks a tensor some backbone needs.
    #[error("incomplete archive: missing tensor `{0}`")]
    IncompleteArchive(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {}: {message}", path.display())]
    Image { path: PathBuf, message: String },

    /// A forward value or loss became NaN or infinite.
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
