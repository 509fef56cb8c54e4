use thiserror::Error;

use crate::coupling::IterationStats;
use crate::waveform::Waveform;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time grid is not strictly increasing at index {index}")]
    NonMonotonic { index: usize },
    #[error("time grid must start at 0 (got {first})")]
    BadEndpoints { first: f64 },
    #[error("time grid needs at least 2 points (got {0})")]
    BadCount(usize),
    #[error("time {t} lies outside the window [0, {end}]")]
    OutOfWindow { t: f64, end: f64 },
    #[error("window mismatch: expected end time {expected}, got {found}")]
    WindowMismatch { expected: f64, found: f64 },
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("implicit stage solve failed: {0}")]
    StageSolveFailure(String),
    #[error("step size underflow at t = {t} (dt = {dt})")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("no convergence within {iterations} iterations")]
    MaxItersExceeded {
        iterations: usize,
        best: Box<(Waveform, IterationStats)>,
    },
    #[error("subsolver failed: {0}")]
    SolverFailure(String),
    #[error("quasi-Newton history is empty after filtering")]
    SingularUpdate,
    #[error("singular linear system: {0}")]
    SingularSystem(String),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
