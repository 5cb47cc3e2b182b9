use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the operation's domain (shape mismatch,
    /// empty input, out-of-range count).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed line {line} in {}: {reason}", .path.display())]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate id \"{0}\"")]
    DuplicateId(String),

    #[error("empty catalog")]
    EmptyCatalog,

    #[error("empty knowledge base")]
    EmptyKnowledgeBase,

    #[error("transport error during {stage}: {message}")]
    Transport { stage: String, message: String },

    #[error("protocol error during {stage}: {message}")]
    Protocol { stage: String, message: String },

    #[error("backend error during {stage}: {message}")]
    Backend { stage: String, message: String },

    /// Non-finite values reached the optimizer or a loss.
    #[error("training error: {0}")]
    Training(String),

    #[error("iteration {iteration} failed at stage {stage}: {source}")]
    Iteration {
        iteration: usize,
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("image format error: {0}")]
    ImageFormat(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Stage name for gateway and iteration errors, if any.
    pub fn stage(&self) -> Option<&str> {
        match self {
            Error::Transport { stage, .. }
            | Error::Protocol { stage, .. }
            | Error::Backend { stage, .. }
            | Error::Iteration { stage, .. } => Some(stage),
            _ => None,
        }
    }
}
