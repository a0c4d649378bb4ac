//! Numerical kernels shared by the denoising and control pipelines.

pub mod fft;
pub mod lu;
pub mod rng;
pub mod sat;
pub mod sparse;

pub use fft::{fft2, ifft2};
pub use lu::{sparse_solve, SparseLu};
pub use rng::Rng;
pub use sat::SummedAreaTable;
pub use sparse::{SparseMatrix, TripletBuilder};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("matrix is singular (zero pivot at position {pivot})")]
    Singular { pivot: usize },
    #[error("solve residual {residual:e} above tolerance")]
    Inaccurate { residual: f64 },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("empty system")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("grid size {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("invalid Poisson mean {0}")]
    InvalidMean(f64),
    #[error("box at ({top}, {left}) with side {side} exceeds {rows}x{cols} grid")]
    BoxOutOfBounds {
        top: usize,
        left: usize,
        side: usize,
        rows: usize,
        cols: usize,
    },
}
