//! Reverse-mode automatic differentiation over dense matrices.
//!
//! Enough machinery for small MLPs: matrix products, pointwise
//! nonlinearities, row softmax, clamped logs, reductions, explicit-mask
//! dropout and a gradient-reversal node.

mod array;
mod gradcheck;
mod rng;
mod tape;

pub use array::Array2;
pub use gradcheck::{gradcheck, relative_error, GradcheckReport};
pub use rng::RngStream;
pub use tape::{sigmoid, Gradients, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NdError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("data of length {len} cannot fill a {rows}x{cols} array")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("{op} of an empty array")]
    Empty { op: &'static str },
    #[error("dropout rate {0} outside [0, 1)")]
    DropoutRate(f64),
    #[error("expected a 1x1 output, got {0:?}")]
    NotScalar((usize, usize)),
}
