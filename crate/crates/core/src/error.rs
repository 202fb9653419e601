//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("score out of range at agent {agent}, item {item}: {value} is outside [-1, 1]")]
    ScoreOutOfRange {
        agent: String,
        item: String,
        value: f64,
    },

    #[error("duplicate {kind} id: {id}")]
    DuplicateId { kind: &'static str, id: String },

    #[error("unknown {kind} id: {id}")]
    UnknownId { kind: &'static str, id: String },

    #[error("no observed entries available for {0}")]
    EmptyObservations(&'static str),

    #[error("rectangle ({i},{j})x({i2},{j2}) touches an unobserved cell")]
    RectangleUnobserved {
        i: usize,
        i2: usize,
        j: usize,
        j2: usize,
    },

    #[error("degenerate rectangle: indices must be distinct (agents {i},{i2}; items {j},{j2})")]
    DegenerateRectangle {
        i: usize,
        i2: usize,
        j: usize,
        j2: usize,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("ranking AUC needs at least one agent of each class; missing {0}")]
    MissingClass(&'static str),

    #[error("solver diverged: {0}")]
    Divergence(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: &std::path::Path, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }
}
