use std::fmt;

use thiserror::Error;

use crate::corpus::CorpusError;
use crate::embedding::EmbedError;
use crate::llm::LlmError;
use crate::prompts::{ParseError, TemplateError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage, used to tag errors that abort a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Retrieval,
    Planning,
    Agents,
    Synthesis,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Retrieval => "stage 1 (contextual retrieval)",
            Stage::Planning => "stage 2 (meta-planning)",
            Stage::Agents => "stage 3 (agent reasoning)",
            Stage::Synthesis => "stage 4 (synthesis and judgment)",
        })
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index is empty")]
    EmptyIndex,

    #[error(transparent)]
    Embedding(#[from] EmbedError),

    #[error(transparent)]
    Llm(#[from] LlmError),

    #[error(transparent)]
    Template(#[from] TemplateError),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("every agent failed; first failure: {0}")]
    AllAgentsFailed(String),

    #[error("ingestion aborted after {embedded} of {total} rows: {source}")]
    IngestAborted {
        embedded: usize,
        total: usize,
        #[source]
        source: EmbedError,
    },

    #[error("{failed} of {total} samples failed, above the 10% abort threshold")]
    TooManyFailures { failed: usize, total: usize },

    #[error(transparent)]
    Corpus(#[from] CorpusError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at(self, stage: Stage) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
