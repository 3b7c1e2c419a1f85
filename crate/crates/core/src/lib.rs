//! A compact salient-object-detection kit: a small reverse-mode autodiff
//! engine, the layers and blocks of a C⁴Net-style encoder/decoder, the
//! weighted edge-aware loss family, SOD evaluation metrics, and a training /
//! ablation harness driven by synthetic shape data.
//!
//! Hot kernels (convolution, pooling, resampling, per-image metrics) run on
//! rayon when the `parallel` feature is enabled and fall back to plain
//! iteration otherwise. Results are bit-identical either way.

pub mod autograd;
pub mod error;
pub mod harness;
pub mod layers;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod parallel;

pub use autograd::{Float, Gradients, Tape, Tensor, Var};
pub use error::{Error, Result};
