use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {field}: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("episode over: object already dropped at tick {tick}")]
    EpisodeOver { tick: u64 },

    #[error("sequencing error: expected tick {expected}, got {got}")]
    Sequencing { expected: u64, got: u64 },

    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("training diverged at {stage} {index}: {reason}")]
    Training {
        stage: &'static str,
        index: usize,
        reason: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("numerical failure in component {component}: {reason}")]
    Numerical { component: usize, reason: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("generation error: {0}")]
    Generation(String),

    #[error("at tick {tick}: {source}")]
    AtTick {
        tick: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Dimension {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn at_tick(self, tick: u64) -> Self {
        Error::AtTick {
            tick,
            source: Box::new(self),
        }
    }
}
