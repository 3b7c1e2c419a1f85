//! Parameterized layers over the autodiff tape.
//!
//! Stateless image operators (ReLU, sigmoid, pooling, bilinear resampling,
//! dilation/erosion) live directly on [`Tape`](crate::autograd::Tape); this
//! module adds named parameters and the layers that own them.

mod modules;
mod params;

pub use modules::{BatchNorm2d, Conv2d, Conv2dSpec, ConvBnRelu, Linear, BN_EPS, BN_MOMENTUM};
pub use params::{Ctx, LrGroup, ParamId, ParamStore, Parameter, Role};
