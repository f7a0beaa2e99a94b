//! Minimal reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] borrows a [`ParamSet`] immutably and records every forward
//! operation; [`Tape::backward`] returns a [`Gradients`] set that callers
//! reduce into `Param::grad` in a fixed order. Several tapes may share one
//! parameter set concurrently.

mod check;
mod matrix;
mod param;
mod tape;

pub use check::{finite_diff_check, FiniteDiffReport};
pub use matrix::Matrix;
pub use param::{Gradients, Param, ParamId, ParamKind, ParamSet};
pub use tape::{Entry, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("{op}: expected a scalar operand, got {rows}x{cols}")]
    NotScalar { op: &'static str, rows: usize, cols: usize },
    #[error("backward: loss must be a scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("{op}: empty operand")]
    Empty { op: &'static str },
    #[error("{op}: value {value} outside the domain")]
    Domain { op: &'static str, value: f64 },
    #[error("{op}: index {index} out of range (bound {bound})")]
    IndexOutOfRange { op: &'static str, index: usize, bound: usize },
}
