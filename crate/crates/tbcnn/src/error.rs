//! Error type shared across the toolkit.

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by corpus handling, model fitting, and experiment plumbing.
#[derive(Error, Debug)]
pub enum Error {
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Config(String),

    #[error("dataset error in {location}: {message}")]
    Dataset { location: String, message: String },

    #[error("vocabulary error: {0}")]
    Vocabulary(String),

    #[error("topic model error: {0}")]
    TopicModel(String),

    #[error("embedding file {path}, line {line}: {message}")]
    EmbeddingParse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("training error at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("baseline error: {0}")]
    Baseline(String),

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed model file {path}: {message}")]
    ModelFormat { path: String, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the pipeline stage it happened in.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
