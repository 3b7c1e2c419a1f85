use rand::Rng;

use super::{Ctx, LrGroup, ParamId, ParamStore, Role};
use crate::autograd::{Float, Var};
use crate::error::{shape_err, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub bias: bool,
}

impl Conv2dSpec {
    /// Odd kernel, stride 1, padding `kernel / 2` (resolution preserving).
    pub fn same(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self { in_channels, out_channels, kernel, stride: 1, padding: kernel / 2, bias: true }
    }

    pub fn strided(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn no_bias(mut self) -> Self {
        self.bias = false;
        self
    }

    pub fn out_size(&self, extent: usize) -> usize {
        (extent + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn num_params(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel + if self.bias { self.out_channels } else { 0 }
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub spec: Conv2dSpec,
    weight: ParamId,
    bias: Option<ParamId>,
}

impl Conv2d {
    /// He-uniform weights, zero bias.
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, spec: Conv2dSpec, group: LrGroup, rng: &mut impl Rng) -> Result<Self> {
        let fan_in = spec.in_channels * spec.kernel * spec.kernel;
        let bound = (6.0 / fan_in as f64).sqrt();
        let shape = [spec.out_channels, spec.in_channels, spec.kernel, spec.kernel];
        let weight = store.add_uniform(format!("{}.weight", name), &shape, bound, group, rng)?;
        let bias = if spec.bias {
            Some(store.add_filled(format!("{}.bias", name), &[spec.out_channels], 0.0, Role::Trainable(group))?)
        } else {
            None
        };
        Ok(Self { spec, weight, bias })
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = self.bias.map(|b| ctx.param(b));
        ctx.tape.conv2d(x, w, b, self.spec.stride, self.spec.padding)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub channels: usize,
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

impl BatchNorm2d {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, channels: usize, group: LrGroup) -> Result<Self> {
        Ok(Self {
            channels,
            gamma: store.add_filled(format!("{}.weight", name), &[channels], 1.0, Role::Trainable(group))?,
            beta: store.add_filled(format!("{}.bias", name), &[channels], 0.0, Role::Trainable(group))?,
            running_mean: store.add_filled(format!("{}.running_mean", name), &[channels], 0.0, Role::RunningStat)?,
            running_var: store.add_filled(format!("{}.running_var", name), &[channels], 1.0, Role::RunningStat)?,
        })
    }

    pub fn gamma(&self) -> ParamId {
        self.gamma
    }

    pub fn beta(&self) -> ParamId {
        self.beta
    }

    pub fn running(&self) -> (ParamId, ParamId) {
        (self.running_mean, self.running_var)
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        if ctx.tape.dims(x)[1] != self.channels {
            return shape_err(format!("batch_norm over {} channels got {:?}", self.channels, ctx.tape.shape(x)));
        }
        ctx.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            T::from_f64(BN_MOMENTUM),
            T::from_f64(BN_EPS),
        )
    }
}

/// Fully connected layer, weights `(out, in)`; weights and bias are drawn
/// from `U(-1/sqrt(in), 1/sqrt(in))`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Linear {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, in_features: usize, out_features: usize, group: LrGroup, rng: &mut impl Rng) -> Result<Self> {
        let bound = 1.0 / (in_features as f64).sqrt();
        Ok(Self {
            in_features,
            out_features,
            weight: store.add_uniform(format!("{}.weight", name), &[out_features, in_features], bound, group, rng)?,
            bias: store.add_uniform(format!("{}.bias", name), &[out_features], bound, group, rng)?,
        })
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = ctx.param(self.bias);
        ctx.tape.linear(x, w, Some(b))
    }

    pub fn num_params(&self) -> usize {
        self.out_features * (self.in_features + 1)
    }
}

/// Conv (no bias) -> BatchNorm -> ReLU.
#[derive(Clone, Debug)]
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
}

impl ConvBnRelu {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, spec: Conv2dSpec, group: LrGroup, rng: &mut impl Rng) -> Result<Self> {
        let spec = spec.no_bias();
        Ok(Self {
            conv: Conv2d::new(store, &format!("{}.conv", name), spec, group, rng)?,
            bn: BatchNorm2d::new(store, &format!("{}.bn", name), spec.out_channels, group)?,
        })
    }

    /// Conv and BN, without the activation.
    pub fn pre_activation<T: Float>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(ctx, x)?;
        self.bn.forward(ctx, y)
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let y = self.pre_activation(ctx, x)?;
        Ok(ctx.tape.relu(y))
    }

    /// Trainable scalars: conv weights plus BN scale and shift.
    pub fn num_params(&self) -> usize {
        self.conv.spec.num_params() + 2 * self.bn.channels
    }
}
