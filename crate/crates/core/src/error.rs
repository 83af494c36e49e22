use std::path::PathBuf;

/// Errors raised anywhere in the ingestion, training and evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("training error in epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(row: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            row,
            column,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
