use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::aggregate::AggregateError;
use crate::clustering::ClusterError;
use crate::coding::CodingError;
use crate::coref::CorefError;
use crate::corpus::CorpusError;
use crate::embedding::EmbeddingError;
use crate::lexicon::LexiconError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Coref(#[from] CorefError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Input(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Error {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for I/O failures, 1 for everything the user can
    /// fix by changing the input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            Error::Embedding(EmbeddingError::Io(_))
            | Error::Embedding(EmbeddingError::Connection(_))
            | Error::Embedding(EmbeddingError::Transport(_))
            | Error::Coding(CodingError::Io(_)) => 2,
            _ => 1,
        }
    }
}

/// Reads a whole file, attaching the path to any error.
pub fn read_to_string(path: impl AsRef<Path>) -> Result<String> {
    std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path, e))
}
