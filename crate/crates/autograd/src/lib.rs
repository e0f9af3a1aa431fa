//! Minimal dense tensors with tape-based reverse-mode differentiation.
//!
//! Forward computations are recorded on a [`Tape`] as [`Var`] handles; a
//! single [`Tape::backward`] sweep from a scalar yields [`Gradients`] for
//! every leaf. Every recorded operation rejects non-finite results with a
//! [`TensorError::NonFinite`] naming the operation.

mod error;
pub mod gradcheck;
pub mod kernels;
pub mod ops;
mod optim;
mod scalar;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use ops::{topk_indices, Conv1dSpec, Elementwise};
pub use optim::Adam;
pub use scalar::Scalar;
pub use tape::{BackwardFn, Gradients, Tape, Var};
pub use tensor::Tensor;
