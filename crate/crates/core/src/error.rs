use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("parse tree error: {0}")]
    Tree(String),
    #[error("agent error: {0}")]
    Agent(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Format { context: String, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Format {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
