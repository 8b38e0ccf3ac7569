//! A small dense-tensor core with reverse-mode automatic differentiation,
//! the neural building blocks used by the reconstruction model (convolution,
//! multi-head attention, layer normalization, bilinear sampling,
//! soft-argmax), a named parameter store with Adam, and a checkpoint format.
//!
//! Everything computes in `f64`; checkpoints serialize parameters as
//! little-endian `f32` blobs. Forward and backward passes are single-threaded
//! and fully deterministic: the same graph over the same values produces
//! bitwise-identical results.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod kernels;
pub mod nn;
pub mod store;

pub use graph::{Gradients, Graph, Pad, Var};
pub use nn::{attention_mix, AttentionBlock, FeedForward, LayerNorm, Linear, StackConfig, TransformerStack};
pub use store::{adam_step, AdamConfig, Binder, GradMap, Init, ParamStore};

use std::fmt;

/// Errors from graph construction, backward passes, and the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Operands with incompatible shapes; names the op and both shapes.
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An op rejected its configuration (bad axis, non-integral conv output,
    /// head-divisibility, non-scalar loss, ...).
    BadOp { op: &'static str, msg: String },
    /// `adam_step` found a parameter with no gradient entry.
    MissingGradient { param: String },
    /// A value that must be finite was NaN or infinite.
    NonFinite { what: String },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "shape mismatch in {op}: {lhs:?} vs {rhs:?}")
            }
            TensorError::BadOp { op, msg } => write!(f, "invalid {op}: {msg}"),
            TensorError::MissingGradient { param } => {
                write!(f, "missing gradient for parameter {param:?}")
            }
            TensorError::NonFinite { what } => write!(f, "non-finite value in {what}"),
        }
    }
}

impl std::error::Error for TensorError {}
