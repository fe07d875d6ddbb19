//! Dense and sparse matrices plus a small tape-based reverse-mode autodiff
//! engine covering the operations a GCN with reconstruction heads needs.

mod gradcheck;
mod rng;
mod sparse;
mod tape;

pub use gradcheck::{finite_diff_check, GradCheck};
pub use rng::Rng;
pub use sparse::CsrMatrix;
pub use tape::{Tape, Var, LOG_CLAMP};

use thiserror::Error;

/// Row-major fp64 matrix used for features, weights and activations.
pub type DenseMatrix = ndarray::Array2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: dimension mismatch, {lhs:?} vs {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("dropout probability {0} outside [0, 1)")]
    InvalidProbability(f64),
    #[error("backward requires a 1x1 loss, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,
    #[error("value belongs to a different tape")]
    ForeignValue,
    #[error("{op} produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("index {index} out of range for {what} of size {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },
    #[error("objective is not deterministic: repeated evaluation gave {first} then {second}")]
    NonDeterministic { first: f64, second: f64 },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub(crate) fn check_finite(m: &DenseMatrix, op: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

pub(crate) fn shape(m: &DenseMatrix) -> (usize, usize) {
    m.dim()
}
