//! Optimal control of the Poisson equation on the unit square under an
//! `L¹` budget on the control.

pub mod fem;
pub mod solve;
pub mod ssn;

use thiserror::Error;

use crate::numkit::NumError;

pub use fem::FemSystem;
pub use solve::{solve_sparse_control, verify_kkt, ControlConfig, ControlSolution, KktReport};
pub use ssn::{shrinkage, ssn_solve, ActivePattern, ControlIterate, SsnOutcome, SubproblemParams};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("mesh needs at least 2 cells per side, got {0}")]
    MeshTooCoarse(usize),
    #[error("invalid subproblem parameters: {0}")]
    InvalidParams(String),
    #[error("expected vectors of length {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("semismooth Newton stopped after {iterations} iterations with residual {residual:e}")]
    SsnIterationCap { iterations: usize, residual: f64 },
    #[error("linear solve failed: {0}")]
    Linear(#[from] NumError),
}
