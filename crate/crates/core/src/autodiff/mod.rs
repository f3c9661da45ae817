//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! Forward passes record primitive operations onto a [`Tape`] (define-by-run;
//! the tape is rebuilt every pass). [`Tape::backward`] replays the record in
//! reverse and returns the gradient of a scalar root with respect to every
//! leaf that asked for one. [`finite_difference_gradient`] is the independent
//! oracle used to validate the tape.

mod finite_diff;
mod tape;
mod tensor;

pub use finite_diff::{finite_difference_gradient, finite_difference_gradient_seq};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GradError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op} expects a matrix operand, got shape {shape:?}")]
    NotAMatrix { op: &'static str, shape: Vec<usize> },
    #[error("tensor shape {shape:?} implies {expected} elements, data has {actual}")]
    LengthMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("tensor shapes must have positive extents, got {shape:?}")]
    ZeroExtent { shape: Vec<usize> },
    #[error("tensor data contains a non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("backward root must be scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },
    #[error("label {label} out of range for {classes} classes (row {row})")]
    LabelOutOfRange {
        label: usize,
        classes: usize,
        row: usize,
    },
    #[error("label count {labels} does not match batch size {batch}")]
    LabelCountMismatch { labels: usize, batch: usize },
    #[error("backward called on an empty tape")]
    EmptyTape,
}
