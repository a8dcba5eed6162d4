use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid timestamp {value:?}: {message}")]
    Timestamp { value: String, message: String },

    #[error("label validation failed for post {post_id:?}: {message}")]
    Label { post_id: String, message: String },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("pattern {id:?}: {message}")]
    Pattern { id: String, message: String },

    #[error("rule {id:?}: {message}")]
    Rule { id: String, message: String },

    #[error("model: {0}")]
    Model(String),

    #[error("training: {0}")]
    Training(String),

    #[error("plug-in protocol error at response line {line}: {message}")]
    Protocol { line: usize, message: String },

    #[error("plug-in: {0}")]
    Plugin(String),

    #[error("plug-in timed out after {0:?}")]
    Timeout(std::time::Duration),

    #[error("evaluation: {0}")]
    Eval(String),

    #[error("rating matrix: {0}")]
    Ratings(String),

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}
