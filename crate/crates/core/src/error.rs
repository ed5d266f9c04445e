use thiserror::Error;

use crate::model::Constraint;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("rejected: {0}")]
    Reject(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SolverError {
    #[error("rejected: {0}")]
    Reject(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LearnError {
    #[error("constraint {0} is already labeled")]
    DuplicateLabel(Constraint),
    #[error("rejected: {0}")]
    Reject(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AcqError {
    /// The bias holds no candidate able to explain the oracle's answers.
    #[error("collapse: {0}")]
    Collapse(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
