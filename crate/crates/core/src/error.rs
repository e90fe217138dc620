use std::path::PathBuf;

use thiserror::Error;

use crate::model::ModelError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("position ({}, {}, {}) lies outside the safe region", pos[0], pos[1], pos[2])]
    OutsideSafeRegion { pos: [f64; 3] },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("conjugate gradient stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("finite-difference step underflow at coordinate {0}")]
    StepUnderflow(usize),

    #[error("pseudo-inverse failed: {0}")]
    PseudoInverse(String),

    #[error("consistency chain reached {cap} iterations; unresolved residual norms {residuals:?}")]
    ChainIterationCap { cap: usize, residuals: Vec<f64> },

    #[error("initial data violates the Gauss law (residual {0:e})")]
    InconsistentInitialData(f64),

    #[error("{0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("i/o failure at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
