//! Decoder building blocks: compression shortcuts, the pyramid-semantic
//! module, the guidance flow, edge features, the complementary extraction
//! layer and the supervision heads.

use rand::Rng;

use super::config::ModelConfig;
use crate::autograd::{Float, Tape, Var};
use crate::error::{contract_err, shape_err, Result};
use crate::layers::{Conv2d, Conv2dSpec, ConvBnRelu, Ctx, Linear, LrGroup, ParamStore};

/// Structuring element of the edge operators.
pub const EDGE_KERNEL: usize = 3;

/// Contextual compression: 3x3 Conv-BN-ReLU to `cf` channels.
#[derive(Clone, Debug)]
pub struct Ccm {
    inner: ConvBnRelu,
}

impl Ccm {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, in_channels: usize, cf: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self { inner: ConvBnRelu::new(store, name, Conv2dSpec::same(in_channels, cf, 3), LrGroup::Head, rng)? })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        self.inner.forward(ctx, x)
    }
}

/// Scale (`w`) and shift (`v`) vectors from two independent
/// fc -> ReLU -> fc -> sigmoid stacks on the global average.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    pub scale_fc1: Linear,
    pub scale_fc2: Linear,
    pub shift_fc1: Linear,
    pub shift_fc2: Linear,
}

impl ChannelAttention {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, channels: usize, hidden: usize, rng: &mut impl Rng) -> Result<Self> {
        let g = LrGroup::Head;
        Ok(Self {
            scale_fc1: Linear::new(store, &format!("{}.scale.fc1", name), channels, hidden, g, rng)?,
            scale_fc2: Linear::new(store, &format!("{}.scale.fc2", name), hidden, channels, g, rng)?,
            shift_fc1: Linear::new(store, &format!("{}.shift.fc1", name), channels, hidden, g, rng)?,
            shift_fc2: Linear::new(store, &format!("{}.shift.fc2", name), hidden, channels, g, rng)?,
        })
    }

    /// Returns `(w, v)`, each `(N, C)`.
    pub fn weights<T: Float>(&self, ctx: &mut Ctx<'_, T>, f: Var) -> Result<(Var, Var)> {
        let pooled = ctx.tape.global_avg_pool(f)?;
        let stack = |ctx: &mut Ctx<'_, T>, fc1: &Linear, fc2: &Linear| -> Result<Var> {
            let h = fc1.forward(ctx, pooled)?;
            let h = ctx.tape.relu(h);
            let o = fc2.forward(ctx, h)?;
            Ok(ctx.tape.sigmoid(o))
        };
        let w = stack(ctx, &self.scale_fc1, &self.scale_fc2)?;
        let v = stack(ctx, &self.shift_fc1, &self.shift_fc2)?;
        Ok((w, v))
    }

    /// `w * f + v`, broadcast per channel.
    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, f: Var) -> Result<Var> {
        let [n, c, _, _] = ctx.tape.dims(f);
        let (w, v) = self.weights(ctx, f)?;
        let w = ctx.tape.reshape(w, &[n, c, 1, 1])?;
        let v = ctx.tape.reshape(v, &[n, c, 1, 1])?;
        let scaled = ctx.tape.mul(f, w)?;
        ctx.tape.add(scaled, v)
    }
}

/// Intermediate values of one PSM pass, for inspection.
pub struct PsmTrace {
    pub pooled: Vec<Var>,
    pub fused: Var,
    pub output: Var,
}

/// Pyramid-semantic module: identity branch plus average-pooled branches,
/// fused by a 3x3 conv, then channel-wise scaled and shifted.
#[derive(Clone, Debug)]
pub struct Psm {
    pyramid_sizes: Vec<usize>,
    branches: Vec<ConvBnRelu>,
    fuse: ConvBnRelu,
    pub attention: ChannelAttention,
}

impl Psm {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, cfg: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        let cf = cfg.cf;
        let branches = cfg
            .pyramid_sizes
            .iter()
            .enumerate()
            .map(|(j, _)| ConvBnRelu::new(store, &format!("{}.branch{}", name, j + 1), Conv2dSpec::same(cf, cf, 3), LrGroup::Head, rng))
            .collect::<Result<Vec<_>>>()?;
        let fuse_in = cf * (cfg.pyramid_sizes.len() + 1);
        Ok(Self {
            pyramid_sizes: cfg.pyramid_sizes.clone(),
            branches,
            fuse: ConvBnRelu::new(store, &format!("{}.fuse", name), Conv2dSpec::same(fuse_in, cf, 3), LrGroup::Head, rng)?,
            attention: ChannelAttention::new(store, &format!("{}.attention", name), cf, cfg.attention_hidden(), rng)?,
        })
    }

    /// Pool output sizes actually used on an `h x w` map: each configured
    /// size is capped at the map extent.
    pub fn effective_sizes(&self, h: usize, w: usize) -> Vec<(usize, usize)> {
        self.pyramid_sizes.iter().map(|&p| (p.min(h), p.min(w))).collect()
    }

    pub fn forward_traced<T: Float>(&self, ctx: &mut Ctx<'_, T>, f: Var) -> Result<PsmTrace> {
        let [_, _, h, w] = ctx.tape.dims(f);
        let mut parts = vec![f];
        let mut pooled = Vec::with_capacity(self.branches.len());
        for (branch, (ph, pw)) in self.branches.iter().zip(self.effective_sizes(h, w)) {
            let p = ctx.tape.adaptive_avg_pool(f, ph, pw)?;
            pooled.push(p);
            let p = branch.forward(ctx, p)?;
            parts.push(ctx.tape.upsample_bilinear(p, h, w)?);
        }
        let cat = ctx.tape.concat_channels(&parts)?;
        let fused = self.fuse.forward(ctx, cat)?;
        let output = self.attention.forward(ctx, fused)?;
        Ok(PsmTrace { pooled, fused, output })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, f: Var) -> Result<Var> {
        Ok(self.forward_traced(ctx, f)?.output)
    }
}

/// `f_g = Up(f_h4) + Up(f_h5)` at `target`; a missing level-4 feature
/// contributes nothing.
pub fn guidance_flow<T: Float>(tape: &mut Tape<T>, f_h4: Option<Var>, f_h5: Var, target: (usize, usize)) -> Result<Var> {
    let up5 = tape.upsample_bilinear(f_h5, target.0, target.1)?;
    match f_h4 {
        Some(f4) => {
            if tape.dims(f4)[1] != tape.dims(f_h5)[1] {
                return shape_err("guidance features differ in channels");
            }
            let up4 = tape.upsample_bilinear(f4, target.0, target.1)?;
            tape.add(up4, up5)
        }
        None => Ok(up5),
    }
}

/// `(dilate(S) - erode(S)) * f_l`, the boundary band broadcast over channels.
pub fn edge_features<T: Float>(tape: &mut Tape<T>, s: Var, f_l: Var) -> Result<Var> {
    let ds = tape.dims(s);
    let dl = tape.dims(f_l);
    if ds[1] != 1 || ds[0] != dl[0] || ds[2] != dl[2] || ds[3] != dl[3] {
        return shape_err(format!("edge mask {:?} does not align with {:?}", tape.shape(s), tape.shape(f_l)));
    }
    let edge = edge_map(tape, s)?;
    tape.mul(f_l, edge)
}

pub fn edge_map<T: Float>(tape: &mut Tape<T>, s: Var) -> Result<Var> {
    let d = tape.dilate(s, EDGE_KERNEL)?;
    let e = tape.erode(s, EDGE_KERNEL)?;
    tape.sub(d, e)
}

/// 3x3 conv to one channel followed by a sigmoid.
#[derive(Clone, Debug)]
pub struct SupervisionHead {
    conv: Conv2d,
}

impl SupervisionHead {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, cf: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self { conv: Conv2d::new(store, name, Conv2dSpec::same(cf, 1, 3), LrGroup::Head, rng)? })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, f: Var) -> Result<Var> {
        let logits = self.conv.forward(ctx, f)?;
        Ok(ctx.tape.sigmoid(logits))
    }
}

/// Complementary extraction layer: concatenates low-level, high-level, edge
/// and guidance features and runs six Conv-BN-ReLU units with a residual from
/// the first unit's output into the last unit's pre-activation.
#[derive(Clone, Debug)]
pub struct Cem {
    units: Vec<ConvBnRelu>,
    pub head: SupervisionHead,
}

pub const CEM_UNITS: usize = 6;

impl Cem {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, cf: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut units = Vec::with_capacity(CEM_UNITS);
        for u in 0..CEM_UNITS {
            let cin = if u == 0 { 4 * cf } else { cf };
            units.push(ConvBnRelu::new(store, &format!("{}.unit{}", name, u + 1), Conv2dSpec::same(cin, cf, 3), LrGroup::Head, rng)?);
        }
        Ok(Self { units, head: SupervisionHead::new(store, &format!("{}.head", name), cf, rng)? })
    }

    /// Returns `(f_out, S_i)`. `s_prev` is upsampled to this layer's resolution.
    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, f_l: Var, f_h: Var, f_g: Var, s_prev: Var) -> Result<(Var, Var)> {
        let dl = ctx.tape.dims(f_l);
        for v in [f_h, f_g] {
            if ctx.tape.dims(v) != dl {
                return shape_err(format!("CEM inputs misaligned: {:?} vs {:?}", ctx.tape.shape(v), ctx.tape.shape(f_l)));
            }
        }
        let [_, _, h, w] = dl;
        let [_, _, sh, sw] = ctx.tape.dims(s_prev);
        if sh > h || sw > w {
            return contract_err("previous supervision is finer than this layer");
        }
        let s = ctx.tape.upsample_bilinear(s_prev, h, w)?;
        let f_edge = edge_features(&mut ctx.tape, s, f_l)?;
        let cat = ctx.tape.concat_channels(&[f_l, f_h, f_edge, f_g])?;
        let first = self.units[0].forward(ctx, cat)?;
        let mut x = first;
        for unit in &self.units[1..CEM_UNITS - 1] {
            x = unit.forward(ctx, x)?;
        }
        let last = self.units[CEM_UNITS - 1].pre_activation(ctx, x)?;
        let sum = ctx.tape.add(last, first)?;
        let out = ctx.tape.relu(sum);
        let s_i = self.head.forward(ctx, out)?;
        Ok((out, s_i))
    }
}

/// Two 3x3 Conv-BN-ReLU units.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    a: ConvBnRelu,
    b: ConvBnRelu,
}

impl ConvBlock {
    pub fn new<T: Float>(store: &mut ParamStore<T>, name: &str, cin: usize, cout: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Self {
            a: ConvBnRelu::new(store, &format!("{}.a", name), Conv2dSpec::same(cin, cout, 3), LrGroup::Head, rng)?,
            b: ConvBnRelu::new(store, &format!("{}.b", name), Conv2dSpec::same(cout, cout, 3), LrGroup::Head, rng)?,
        })
    }

    pub fn forward<T: Float>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let y = self.a.forward(ctx, x)?;
        self.b.forward(ctx, y)
    }
}
