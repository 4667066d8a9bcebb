use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorefError {
    #[error(transparent)]
    Nn(#[from] corefrl_nn::NnError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed input text; `line` is 1-based.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid document {doc_key}: {msg}")]
    InvalidDocument { doc_key: String, msg: String },
    #[error("no embedding for token {token} of document {doc_key}")]
    MissingEmbedding { doc_key: String, token: usize },
    #[error("embedding format: {0}")]
    EmbeddingFormat(String),
    #[error("illegal action {action:?} in state (i={i}, j={j})")]
    IllegalAction { action: crate::env::Action, i: usize, j: usize },
    #[error("episode already finished")]
    Terminal,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = CorefError> = std::result::Result<T, E>;

impl CorefError {
    pub fn config(msg: impl Into<String>) -> Self {
        CorefError::Config(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        CorefError::Parse { line, msg: msg.into() }
    }

    pub fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CorefError::File { path: path.into(), source }
    }

    /// True when the error stems from bad user input (files, configuration) rather
    /// than a bug or an environment failure.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, CorefError::Nn(_) | CorefError::Io(_) | CorefError::Terminal)
    }
}
