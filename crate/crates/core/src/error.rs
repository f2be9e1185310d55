use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh request: {0}")]
    InvalidMesh(String),
    #[error("mesh file error at line {line}: {msg}")]
    MeshFormat { line: usize, msg: String },
    #[error("electrode placement failed: {0}")]
    Electrodes(String),
    #[error("interior mask is empty for standoff d0 = {0}")]
    EmptyMask(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("linear solve residual {residual:e} exceeds tolerance {tolerance:e}")]
    InaccurateSolve { residual: f64, tolerance: f64 },
    #[error("membrane solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("membrane residual stopped decreasing at iteration {iteration} ({previous:e} -> {current:e})")]
    Stagnation {
        iteration: usize,
        previous: f64,
        current: f64,
    },
    #[error("injection pattern {pattern} carries net current {net:e}")]
    IncompatibleCurrent { pattern: usize, net: f64 },
    #[error("conductivity at element {element} violates {what}")]
    NotSpd { element: usize, what: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("dataset kind mismatch: expected {expected}, found {found}")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("sensitivity system has no retained columns")]
    EmptySystem,
    #[error("sensitivity system lacks the diagonal pair for element {0}")]
    MissingDiagonal(usize),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
