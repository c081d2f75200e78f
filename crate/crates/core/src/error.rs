use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{}:{line}: invalid record: {message}", path.display())]
    Validation {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("embedding not found for key {key}")]
    EmbeddingNotFound { key: String },

    #[error("missing embeddings for {} text(s): {}", keys.len(), keys.join(", "))]
    MissingEmbeddings { keys: Vec<String> },

    #[error("unsupported format version: found {found:?}, this reader understands {expected:?}")]
    UnsupportedVersion { found: String, expected: String },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("contract violation: {0}")]
    Contract(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    pub(crate) fn format(what: &'static str, message: impl std::fmt::Display) -> Self {
        Error::Format {
            what,
            message: message.to_string(),
        }
    }
}
