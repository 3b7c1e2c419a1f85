//! Joint (`Pipe`) and separated (`Branch`) decoder layers with configurable
//! aggregation, used for the decoder-structure ablation.

use rand::Rng;

use super::blocks::ConvBlock;
use super::config::Aggregation;
use crate::autograd::{Float, Var};
use crate::error::{contract_err, Result};
use crate::layers::{Conv2d, Conv2dSpec, Ctx, LrGroup, ParamStore};

#[derive(Clone, Debug)]
pub struct Aggregator {
    kind: Aggregation,
    /// 1x1 conv that brings a concatenation back to `cf` channels.
    reduce: Option<Conv2d>,
}

impl Aggregator {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, kind: Aggregation, cf: usize, rng: &mut impl Rng) -> Result<Self> {
        let reduce = match kind {
            Aggregation::Cat => Some(Conv2d::new(store, &format!("{}.reduce", name), Conv2dSpec::same(2 * cf, cf, 1), LrGroup::Head, rng)?),
            _ => None,
        };
        Ok(Self { kind, reduce })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, a: Var, b: Var) -> Result<Var> {
        match (self.kind, &self.reduce) {
            (Aggregation::Plus, _) => ctx.tape.add(a, b),
            (Aggregation::Mul, _) => ctx.tape.mul(a, b),
            (Aggregation::Cat, Some(reduce)) => {
                let cat = ctx.tape.concat_channels(&[a, b])?;
                reduce.forward(ctx, cat)
            }
            (Aggregation::Cat, None) => contract_err("Cat aggregation without a reduction conv"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Structure {
    Pipe,
    Branch,
}

/// Outputs of one ablation layer pass. `r1` / `r2` are the two aggregation
/// results, exposed for activation-magnitude studies.
pub struct AblationTrace {
    pub r1: Var,
    pub r2: Var,
    pub output: Var,
}

/// Pipe: `y = B2(R2(B1(R1(f_l, f_h)), f_h))`.
/// Branch: `y = R2(BA(R1(f_l, f_h)), BB(f_h))`.
#[derive(Clone, Debug)]
pub struct AblationLayer {
    pub structure: Structure,
    r1: Aggregator,
    r2: Aggregator,
    block1: ConvBlock,
    block2: ConvBlock,
}

impl AblationLayer {
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        name: &str,
        structure: Structure,
        r1: Aggregation,
        r2: Aggregation,
        cf: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Self {
            structure,
            r1: Aggregator::new(store, &format!("{}.r1", name), r1, cf, rng)?,
            r2: Aggregator::new(store, &format!("{}.r2", name), r2, cf, rng)?,
            block1: ConvBlock::new(store, &format!("{}.block1", name), cf, cf, rng)?,
            block2: ConvBlock::new(store, &format!("{}.block2", name), cf, cf, rng)?,
        })
    }

    pub fn forward_traced<T: Float>(&self, ctx: &mut Ctx<'_, T>, f_l: Var, f_h: Var) -> Result<AblationTrace> {
        let r1 = self.r1.forward(ctx, f_l, f_h)?;
        match self.structure {
            Structure::Pipe => {
                let x = self.block1.forward(ctx, r1)?;
                let r2 = self.r2.forward(ctx, x, f_h)?;
                let output = self.block2.forward(ctx, r2)?;
                Ok(AblationTrace { r1, r2, output })
            }
            Structure::Branch => {
                let low = self.block1.forward(ctx, r1)?;
                let high = self.block2.forward(ctx, f_h)?;
                let r2 = self.r2.forward(ctx, low, high)?;
                Ok(AblationTrace { r1, r2, output: r2 })
            }
        }
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, f_l: Var, f_h: Var) -> Result<Var> {
        Ok(self.forward_traced(ctx, f_l, f_h)?.output)
    }
}
