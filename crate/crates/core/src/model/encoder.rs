use rand::Rng;

use super::config::{ModelConfig, LEVELS};
use crate::autograd::{Float, Var};
use crate::error::{shape_err, Result};
use crate::layers::{Conv2dSpec, ConvBnRelu, Ctx, LrGroup, ParamStore};

/// One encoder stage: stride-2 transition followed by two 3x3 units, with an
/// optional residual around the two units.
#[derive(Clone, Debug)]
struct Stage {
    transition: ConvBnRelu,
    unit1: ConvBnRelu,
    unit2: ConvBnRelu,
    residual: bool,
}

impl Stage {
    fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let t = self.transition.forward(ctx, x)?;
        let u = self.unit1.forward(ctx, t)?;
        let u = self.unit2.pre_activation(ctx, u)?;
        let u = if self.residual { ctx.tape.add(u, t)? } else { u };
        Ok(ctx.tape.relu(u))
    }

    fn num_params(&self) -> usize {
        self.transition.num_params() + self.unit1.num_params() + self.unit2.num_params()
    }
}

/// Five-stage micro-encoder; stage `i` runs at `input_size / 2^i`.
#[derive(Clone, Debug)]
pub struct Encoder {
    stages: Vec<Stage>,
    input_size: usize,
}

impl Encoder {
    pub fn new<T: Float>(store: &mut ParamStore<T>, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let mut stages = Vec::with_capacity(LEVELS);
        let mut cin = 3;
        for (i, &c) in cfg.encoder_channels.iter().enumerate() {
            let name = format!("encoder.stage{}", i + 1);
            let g = LrGroup::Encoder;
            stages.push(Stage {
                transition: ConvBnRelu::new(store, &format!("{}.down", name), Conv2dSpec::same(cin, c, 3).strided(2), g, rng)?,
                unit1: ConvBnRelu::new(store, &format!("{}.unit1", name), Conv2dSpec::same(c, c, 3), g, rng)?,
                unit2: ConvBnRelu::new(store, &format!("{}.unit2", name), Conv2dSpec::same(c, c, 3), g, rng)?,
                residual: cfg.encoder_residual,
            });
            cin = c;
        }
        Ok(Self { stages, input_size: cfg.input_size })
    }

    /// Stage outputs, shallowest first.
    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, image: Var) -> Result<Vec<Var>> {
        let [_, c, h, w] = ctx.tape.dims(image);
        if c != 3 || h != self.input_size || w != self.input_size {
            return shape_err(format!(
                "encoder expects (N, 3, {s}, {s}), got {:?}",
                ctx.tape.shape(image),
                s = self.input_size
            ));
        }
        let mut x = image;
        let mut outs = Vec::with_capacity(LEVELS);
        for stage in &self.stages {
            x = stage.forward(ctx, x)?;
            outs.push(x);
        }
        Ok(outs)
    }

    pub fn num_params(&self) -> usize {
        self.stages.iter().map(Stage::num_params).sum()
    }
}

/// Closed-form trainable-parameter count of the encoder: each stage has three
/// bias-free 3x3 convolutions, each followed by a BN scale and shift.
pub fn encoder_param_count(channels: &[usize; LEVELS]) -> usize {
    let mut cin = 3;
    let mut total = 0;
    for &c in channels {
        total += 9 * cin * c + 2 * c;
        total += 2 * (9 * c * c + 2 * c);
        cin = c;
    }
    total
}
