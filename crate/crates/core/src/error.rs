use thiserror::Error;

use crate::graph_ir::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("validation failed: {}", join_violations(.0))]
    Validation(Vec<Violation>),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("index {index} out of bounds for table of {len} rows")]
    Index { index: usize, len: usize },

    #[error("basic block has no opcodes")]
    EmptyBlock,

    #[error("function has no instructions")]
    EmptyFunction,

    #[error("matrix is all zero")]
    DegenerateMatrix,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ensemble weights have not been trained")]
    NotTrained,

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
