//! Waveform relaxation for coupled time-dependent problems, with
//! time-adaptive quasi-Newton acceleration on an auxiliary time grid.
//!
//! The crate contains the building blocks (waveforms and interpolation,
//! an adaptive SDIRK2 integrator, Dirichlet–Neumann heat subsolvers), the
//! coupling iteration with its accelerators, closed-form tools for linear
//! model problems, and drivers for the numerical studies.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coupling;
pub mod error;
pub mod experiments;
pub mod heat;
pub mod integrate;
pub mod linear;
pub mod qn;
pub mod waveform;

pub use coupling::{
    run_window, run_windows, trace_iterates, Acceleration, Accelerator, CouplingConfig, IterationStats, NoAcceleration,
    Relaxation, SolverOutput, Subsolver, Termination,
};
pub use error::{Error, Result};
pub use heat::{Material, Pairing};
pub use integrate::{Controller, StageProblem};
pub use qn::{accelerate_window, FixedGridQn, GridStrategy, QnAccelerator, QnState};
pub use waveform::{InterpMatrix, TimeGrid, Waveform};
