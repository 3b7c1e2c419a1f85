//! Dense tensors and reverse-mode automatic differentiation.
//!
//! A [`Tape`] owns every value computed in a forward pass; operations return
//! [`Var`] handles. [`Tape::backward`] walks the tape once in reverse and
//! returns per-node gradient buffers.

mod float;
pub mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use float::Float;
pub use tape::{BinaryKind, BnMode, Gradients, Tape, Var};
pub use tensor::Tensor;

