use thiserror::Error;

use crate::isa::{OpClass, Violation};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid program: {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidProgram(Vec<Violation>),

    #[error("pipeline depth must be >= 1, got {0}")]
    InvalidDepth(f64),

    #[error("invalid hazard profile: {0}")]
    InvalidProfile(String),

    #[error("invalid technology parameters: {0}")]
    InvalidTechnology(String),

    #[error("invalid kernel dimensions: {0}")]
    Dimension(String),

    #[error("pivot at step {step} is singular to working precision (|pivot| = {magnitude:e})")]
    SingularPivot { step: usize, magnitude: f64 },

    #[error("reference factorization check failed: {0}")]
    OracleCheck(String),

    #[error("cannot fit gamma for {class}: {reason}")]
    Fit { class: OpClass, reason: String },

    #[error("assembly parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("input image has {got} words, program needs {expected}")]
    MemorySize { expected: usize, got: usize },

    #[error("program uses {needed} registers but the pipeline has {available}")]
    RegisterFile { needed: usize, available: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
