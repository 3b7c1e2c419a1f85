//! Registry of differentiable units and their finite-difference checks.
//!
//! Op units differentiate a random projection `Σ r ⊙ op(x)` with respect to
//! every input; layer and model units differentiate with respect to every
//! trainable parameter.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::data::generate_sample;
use super::train::batch_loss;
use crate::autograd::gradcheck::{check, compare, max_error, pick_coords, GradcheckOptions, Probe};
use crate::autograd::{BnMode, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{Conv2dSpec, ConvBnRelu, Ctx, LrGroup, ParamStore, BN_EPS};
use crate::losses::{mask_pyramid, total_loss, wbce, weight_map, wel, wiou, LossConfig};
use crate::model::ablation::{AblationLayer, Aggregator, Structure};
use crate::model::blocks::{ChannelAttention, Cem, Psm};
use crate::model::{Aggregation, ModelConfig, Net};

pub const TOLERANCE: f64 = 1e-4;

type UnitFn = fn(u64) -> Result<UnitOutput>;
type UnitOutput = (Vec<Probe>, KinkStats);

/// Coordinates checked at a reduced step because the default step crossed a
/// kink (`retried`), and coordinates where every step did (`unresolved`).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KinkStats {
    pub retried: usize,
    pub unresolved: usize,
}

/// Result of one unit.
#[derive(Clone, Debug)]
pub struct UnitReport {
    pub name: &'static str,
    pub probes: Vec<Probe>,
    pub kinks: KinkStats,
}

impl UnitReport {
    pub fn max_error(&self) -> f64 {
        max_error(&self.probes)
    }

    pub fn passes(&self) -> bool {
        self.max_error() < TOLERANCE
    }
}

const OPS: &[(&str, UnitFn)] = &[
    ("add", op_add),
    ("add_broadcast", op_add_broadcast),
    ("sub", op_sub),
    ("mul", op_mul),
    ("mul_broadcast", op_mul_broadcast),
    ("scale", op_scale),
    ("offset", op_offset),
    ("concat", op_concat),
    ("conv2d", op_conv2d),
    ("conv2d_strided", op_conv2d_strided),
    ("batch_norm_train", op_bn_train),
    ("batch_norm_eval", op_bn_eval),
    ("relu", op_relu),
    ("sigmoid", op_sigmoid),
    ("log", op_log),
    ("clamp", op_clamp),
    ("avg_pool", op_avg_pool),
    ("adaptive_avg_pool", op_adaptive_avg_pool),
    ("global_avg_pool", op_global_avg_pool),
    ("upsample", op_upsample),
    ("linear", op_linear),
    ("reshape", op_reshape),
    ("dilate", op_dilate),
    ("erode", op_erode),
    ("sum", op_sum),
    ("sum_items", op_sum_items),
    ("mean", op_mean),
    ("div", op_div),
];

const LAYERS: &[(&str, UnitFn)] = &[
    ("conv_bn_relu", layer_conv_bn_relu),
    ("channel_attention", layer_channel_attention),
    ("psm", layer_psm),
    ("cem", layer_cem),
    ("aggregate_cat", layer_aggregate_cat),
    ("ablation_pipe", layer_ablation_pipe),
    ("ablation_branch", layer_ablation_branch),
];

const LOSSES: &[(&str, UnitFn)] = &[("wbce", loss_wbce), ("wiou", loss_wiou), ("wel", loss_wel), ("total_loss", loss_total)];

const MODEL: &[(&str, UnitFn)] = &[("model", model_micro)];

/// Group scopes that expand to several units.
pub const GROUPS: [&str; 4] = ["ops", "layers", "losses", "all"];

fn registry() -> impl Iterator<Item = &'static (&'static str, UnitFn)> {
    OPS.iter().chain(LAYERS).chain(LOSSES).chain(MODEL)
}

/// Every accepted `--scope` value.
pub fn scope_names() -> Vec<&'static str> {
    GROUPS.iter().copied().chain(registry().map(|(n, _)| *n)).collect()
}

fn units(scope: &str) -> Result<Vec<&'static (&'static str, UnitFn)>> {
    let v: Vec<_> = match scope {
        "ops" => OPS.iter().collect(),
        "layers" => LAYERS.iter().collect(),
        "losses" => LOSSES.iter().collect(),
        "all" => registry().collect(),
        name => registry().filter(|(n, _)| *n == name).collect(),
    };
    if v.is_empty() {
        return Err(Error::Config(format!("unknown gradcheck scope {:?}; expected one of {}", scope, scope_names().join(", "))));
    }
    Ok(v)
}

/// Fails on an unknown scope before any unit runs.
pub fn validate_scope(scope: &str) -> Result<()> {
    units(scope).map(|_| ())
}

pub fn run_scope(scope: &str, seed: u64) -> Result<Vec<UnitReport>> {
    units(scope)?
        .into_iter()
        .map(|(name, f)| {
            let (probes, kinks) = f(seed)?;
            Ok(UnitReport { name, probes, kinks })
        })
        .collect()
}

// ---- helpers

fn rng_for(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_F491_4F6C_DD1D).wrapping_add(salt))
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let d = Uniform::new(lo, hi);
    Tensor::new(shape, (0..n).map(|_| d.sample(rng)).collect()).expect("valid shape")
}

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor<f64> {
    uniform(shape, -2.0, 2.0, rng)
}

fn binary(shape: &[usize], p: f64, rng: &mut impl Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| if rng.gen_bool(p) { 1.0 } else { 0.0 }).collect()).expect("valid shape")
}

/// `Σ r ⊙ y` with a fixed random `r`, so every output coordinate matters.
fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(y).to_vec();
    let r = random(&shape, &mut rng_for(seed, 0xF00D));
    let r = tape.constant(r);
    let p = tape.mul(y, r)?;
    Ok(tape.sum(p))
}

fn opts(seed: u64, max_coords: Option<usize>) -> GradcheckOptions {
    GradcheckOptions { seed, max_coords, ..GradcheckOptions::default() }
}

fn op_check(seed: u64, inputs: Vec<Tensor<f64>>, f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + Sync + Send) -> Result<UnitOutput> {
    let probes = check(&inputs, opts(seed, None), |tape, v| {
        let y = f(tape, v)?;
        project(tape, y, seed)
    })?;
    Ok((probes, KinkStats::default()))
}

fn pass(store: &mut ParamStore<f64>, train: bool) -> Ctx<'_, f64> {
    if train {
        Ctx::train(store)
    } else {
        Ctx::eval_mut(store)
    }
}

/// Steps tried in order; a smaller one is used only when the larger
/// difference crosses a branch of a non-smooth op.
const STEPS: [f64; 3] = [1e-5, 1e-6, 1e-7];

#[derive(Default)]
struct KinkCounts {
    retried: AtomicUsize,
    unresolved: AtomicUsize,
}

/// Checks a loss built from a parameter store, with batch-statistics
/// (`train`) or running-statistics BatchNorm.
fn param_check(
    store: &ParamStore<f64>,
    seed: u64,
    max_coords: Option<usize>,
    train: bool,
    build: impl Fn(&mut Ctx<'_, f64>) -> Result<Var> + Sync + Send,
) -> Result<UnitOutput> {
    let eval = |s: &ParamStore<f64>| -> Result<(f64, u64)> {
        let mut s = s.clone();
        let mut ctx = pass(&mut s, train);
        let out = build(&mut ctx)?;
        Ok((ctx.tape.value(out).data()[0], ctx.tape.branch_signature()))
    };
    let mut base = store.clone();
    let mut ctx = pass(&mut base, train);
    let out = build(&mut ctx)?;
    let signature = ctx.tape.branch_signature();
    let mut grads = ctx.tape.backward(out)?;
    let analytic = ctx.param_grads(&mut grads);
    drop(ctx);
    let counts = KinkCounts::default();
    let mut probes = Vec::new();
    for (k, (id, p)) in store.trainable().enumerate() {
        let g = analytic.iter().find(|(i, _)| *i == id).map(|(_, g)| g.clone()).unwrap_or_else(|| vec![0.0; p.tensor.len()]);
        let coords = pick_coords(p.tensor.len(), max_coords, seed.wrapping_add(k as u64));
        probes.push(compare(&p.name, &g, &coords, GradcheckOptions::default().floor, |c| {
            let mut last = 0.0;
            for (attempt, &h) in STEPS.iter().enumerate() {
                let mut plus = store.clone();
                plus.tensor_mut(id).data_mut()[c] += h;
                let mut minus = store.clone();
                minus.tensor_mut(id).data_mut()[c] -= h;
                let ((fp, sp), (fm, sm)) = (eval(&plus)?, eval(&minus)?);
                last = (fp - fm) / (2.0 * h);
                if sp == signature && sm == signature {
                    if attempt > 0 {
                        counts.retried.fetch_add(1, Ordering::Relaxed);
                    }
                    return Ok(last);
                }
            }
            counts.unresolved.fetch_add(1, Ordering::Relaxed);
            Ok(last)
        })?);
    }
    let stats = KinkStats { retried: counts.retried.into_inner(), unresolved: counts.unresolved.into_inner() };
    Ok((probes, stats))
}

// ---- ops

const X: [usize; 4] = [2, 3, 5, 5];

fn op_add(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 1);
    op_check(seed, vec![random(&X, &mut r), random(&X, &mut r)], |t, v| t.add(v[0], v[1]))
}

fn op_add_broadcast(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 2);
    op_check(seed, vec![random(&X, &mut r), random(&[1, 3, 1, 1], &mut r)], |t, v| t.add(v[0], v[1]))
}

fn op_sub(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 3);
    op_check(seed, vec![random(&X, &mut r), random(&[2, 1, 5, 5], &mut r)], |t, v| t.sub(v[0], v[1]))
}

fn op_mul(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 4);
    op_check(seed, vec![random(&X, &mut r), random(&X, &mut r)], |t, v| t.mul(v[0], v[1]))
}

fn op_mul_broadcast(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 5);
    op_check(seed, vec![random(&X, &mut r), random(&[2, 3, 1, 1], &mut r)], |t, v| t.mul(v[0], v[1]))
}

fn op_scale(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&X, &mut rng_for(seed, 6))], |t, v| Ok(t.scale(v[0], -1.7)))
}

fn op_offset(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&X, &mut rng_for(seed, 7))], |t, v| {
        let y = t.offset(v[0], 0.3);
        t.mul(y, y)
    })
}

fn op_concat(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 8);
    op_check(seed, vec![random(&[2, 2, 4, 4], &mut r), random(&[2, 3, 4, 4], &mut r)], |t, v| t.concat_channels(v))
}

fn op_conv2d(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 9);
    op_check(seed, vec![random(&X, &mut r), random(&[4, 3, 3, 3], &mut r), random(&[4], &mut r)], |t, v| {
        t.conv2d(v[0], v[1], Some(v[2]), 1, 1)
    })
}

fn op_conv2d_strided(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 10);
    op_check(seed, vec![random(&X, &mut r), random(&[2, 3, 3, 3], &mut r)], |t, v| t.conv2d(v[0], v[1], None, 2, 1))
}

fn op_bn_train(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 11);
    op_check(seed, vec![random(&X, &mut r), random(&[3], &mut r), random(&[3], &mut r)], |t, v| {
        let (mut m, mut var) = (vec![0.0; 3], vec![1.0; 3]);
        let mode = BnMode::Train { running_mean: &mut m, running_var: &mut var, momentum: 0.1 };
        t.batch_norm(v[0], v[1], v[2], mode, BN_EPS)
    })
}

fn op_bn_eval(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 12);
    let mean = random(&[3], &mut r).into_data();
    let var = uniform(&[3], 0.5, 2.0, &mut r).into_data();
    op_check(seed, vec![random(&X, &mut r), random(&[3], &mut r), random(&[3], &mut r)], move |t, v| {
        let mode = BnMode::Eval { running_mean: &mean, running_var: &var };
        t.batch_norm(v[0], v[1], v[2], mode, BN_EPS)
    })
}

fn op_relu(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&X, &mut rng_for(seed, 13))], |t, v| Ok(t.relu(v[0])))
}

fn op_sigmoid(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&X, &mut rng_for(seed, 14))], |t, v| Ok(t.sigmoid(v[0])))
}

fn op_log(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![uniform(&X, 0.2, 2.0, &mut rng_for(seed, 15))], |t, v| Ok(t.log(v[0])))
}

fn op_clamp(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&X, &mut rng_for(seed, 16))], |t, v| Ok(t.clamp(v[0], -1.0, 1.0)))
}

fn op_avg_pool(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&[2, 3, 6, 6], &mut rng_for(seed, 17))], |t, v| t.avg_pool(v[0], 2, 2))
}

fn op_adaptive_avg_pool(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&[2, 3, 7, 7], &mut rng_for(seed, 18))], |t, v| t.adaptive_avg_pool(v[0], 3, 2))
}

fn op_global_avg_pool(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&X, &mut rng_for(seed, 19))], |t, v| t.global_avg_pool(v[0]))
}

fn op_upsample(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&[2, 2, 3, 3], &mut rng_for(seed, 20))], |t, v| t.upsample_bilinear(v[0], 7, 6))
}

fn op_linear(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 21);
    op_check(seed, vec![random(&[3, 5], &mut r), random(&[4, 5], &mut r), random(&[4], &mut r)], |t, v| t.linear(v[0], v[1], Some(v[2])))
}

fn op_reshape(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&[2, 6], &mut rng_for(seed, 22))], |t, v| t.reshape(v[0], &[2, 6, 1, 1]))
}

fn op_dilate(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&[2, 1, 6, 6], &mut rng_for(seed, 23))], |t, v| t.dilate(v[0], 3))
}

fn op_erode(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&[2, 1, 6, 6], &mut rng_for(seed, 24))], |t, v| t.erode(v[0], 3))
}

fn op_sum(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&X, &mut rng_for(seed, 25))], |t, v| {
        let s = t.sum(v[0]);
        t.mul(s, s)
    })
}

fn op_sum_items(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&X, &mut rng_for(seed, 26))], |t, v| Ok(t.sum_items(v[0])))
}

fn op_mean(seed: u64) -> Result<UnitOutput> {
    op_check(seed, vec![random(&X, &mut rng_for(seed, 27))], |t, v| {
        let m = t.mean(v[0]);
        t.mul(m, m)
    })
}

fn op_div(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 28);
    op_check(seed, vec![random(&X, &mut r), uniform(&X, 0.5, 2.0, &mut r)], |t, v| t.div(v[0], v[1]))
}

// ---- layers

fn layer_check<L>(
    seed: u64,
    salt: u64,
    inputs: &[&[usize]],
    make: impl FnOnce(&mut ParamStore<f64>, &mut ChaCha8Rng) -> Result<L>,
    forward: impl Fn(&L, &mut Ctx<'_, f64>, &[Var]) -> Result<Var> + Sync + Send,
) -> Result<UnitOutput>
where
    L: Sync + Send,
{
    let mut r = rng_for(seed, salt);
    let mut store = ParamStore::new();
    let layer = make(&mut store, &mut r)?;
    let xs: Vec<Tensor<f64>> = inputs.iter().map(|s| random(s, &mut r)).collect();
    param_check(&store, seed, Some(6), true, |ctx| {
        let vars: Vec<Var> = xs.iter().map(|x| ctx.input(x.clone())).collect();
        let y = forward(&layer, ctx, &vars)?;
        project(&mut ctx.tape, y, seed)
    })
}

const CF: usize = 4;

fn layer_conv_bn_relu(seed: u64) -> Result<UnitOutput> {
    layer_check(
        seed,
        101,
        &[&X],
        |s, r| ConvBnRelu::new(s, "cbr", Conv2dSpec::same(3, 4, 3), LrGroup::Head, r),
        |l, ctx, v| l.forward(ctx, v[0]),
    )
}

fn layer_channel_attention(seed: u64) -> Result<UnitOutput> {
    layer_check(seed, 102, &[&[2, CF, 4, 4]], |s, r| ChannelAttention::new(s, "ca", CF, 2, r), |l, ctx, v| l.forward(ctx, v[0]))
}

fn layer_psm(seed: u64) -> Result<UnitOutput> {
    let cfg = ModelConfig { cf: CF, attention_reduction: 2, ..ModelConfig::default() };
    layer_check(seed, 103, &[&[2, CF, 5, 5]], |s, r| Psm::new(s, "psm", &cfg, r), |l, ctx, v| l.forward(ctx, v[0]))
}

fn layer_cem(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 104);
    let mut store = ParamStore::new();
    let cem = Cem::new(&mut store, "cem", CF, &mut r)?;
    let feats: Vec<Tensor<f64>> = (0..3).map(|_| random(&[2, CF, 4, 4], &mut r)).collect();
    let s_prev = uniform(&[2, 1, 4, 4], 0.05, 0.95, &mut r);
    param_check(&store, seed, Some(6), true, |ctx| {
        let v: Vec<Var> = feats.iter().map(|x| ctx.input(x.clone())).collect();
        let s = ctx.input(s_prev.clone());
        let (d, side) = cem.forward(ctx, v[0], v[1], v[2], s)?;
        let a = project(&mut ctx.tape, d, seed)?;
        let b = project(&mut ctx.tape, side, seed ^ 1)?;
        ctx.tape.add(a, b)
    })
}

fn layer_aggregate_cat(seed: u64) -> Result<UnitOutput> {
    let shape = [2, CF, 4, 4];
    layer_check(seed, 105, &[&shape, &shape], |s, r| Aggregator::new(s, "agg", Aggregation::Cat, CF, r), |l, ctx, v| {
        l.forward(ctx, v[0], v[1])
    })
}

fn ablation(seed: u64, salt: u64, structure: Structure) -> Result<UnitOutput> {
    let shape = [2, CF, 4, 4];
    layer_check(
        seed,
        salt,
        &[&shape, &shape],
        |s, r| AblationLayer::new(s, "abl", structure, Aggregation::Cat, Aggregation::Mul, CF, r),
        |l, ctx, v| l.forward(ctx, v[0], v[1]),
    )
}

fn layer_ablation_pipe(seed: u64) -> Result<UnitOutput> {
    ablation(seed, 107, Structure::Pipe)
}

fn layer_ablation_branch(seed: u64) -> Result<UnitOutput> {
    ablation(seed, 108, Structure::Branch)
}

// ---- losses

const S: [usize; 4] = [2, 1, 6, 6];

/// Predictions enter as logits so the probability stays inside (0, 1).
fn loss_check(seed: u64, salt: u64, f: impl Fn(&mut Tape<f64>, Var, &Tensor<f64>, &Tensor<f64>) -> Result<Var> + Sync + Send) -> Result<UnitOutput> {
    let mut r = rng_for(seed, salt);
    let logits = random(&S, &mut r);
    let mut gt = binary(&S, 0.4, &mut r);
    gt.data_mut()[0] = 1.0;
    gt.data_mut()[S.iter().product::<usize>() - 1] = 1.0;
    let omega = weight_map(&gt, &LossConfig { window_k: 3, ..LossConfig::default() })?;
    let probes = check(&[logits], opts(seed, None), |t, v| {
        let s = t.sigmoid(v[0]);
        f(t, s, &gt, &omega)
    })?;
    Ok((probes, KinkStats::default()))
}

fn loss_wbce(seed: u64) -> Result<UnitOutput> {
    loss_check(seed, 201, |t, s, gt, om| wbce(t, s, gt, om, &LossConfig::default()))
}

fn loss_wiou(seed: u64) -> Result<UnitOutput> {
    loss_check(seed, 202, |t, s, gt, om| wiou(t, s, gt, om))
}

fn loss_wel(seed: u64) -> Result<UnitOutput> {
    loss_check(seed, 203, |t, s, gt, om| wel(t, s, gt, om, &LossConfig::default()))
}

fn loss_total(seed: u64) -> Result<UnitOutput> {
    let mut r = rng_for(seed, 204);
    let cfg = ModelConfig::micro();
    let mut res = cfg.resolutions();
    res[0] = cfg.input_size;
    let gt_full = Tensor::new(&[2, 1, 16, 16], generate_sample(32, seed, 0).mask[..512].iter().map(|&v| v as f64).collect())?;
    let gts = mask_pyramid(&gt_full, &cfg.resolutions())?;
    let logits: Vec<Tensor<f64>> = res.iter().map(|&n| random(&[2, 1, n, n], &mut r)).collect();
    let probes = check(&logits, opts(seed, Some(24)), |t, v| {
        let side: Vec<Var> = v.iter().map(|&x| t.sigmoid(x)).collect();
        Ok(total_loss(t, &side, &gts, &LossConfig::default())?.total)
    })?;
    Ok((probes, KinkStats::default()))
}

// ---- model

/// Whole micro-model loss on a batch of four synthetic 16x16 samples.
///
/// BatchNorm uses running statistics, warmed by one batch-statistics pass.
/// With batch statistics the 1x1 deepest maps often have a channel that ReLU
/// zeroed across the batch; its variance is then ~eps and the loss curves so
/// sharply that a 1e-5 central difference is no longer accurate. Batch
/// statistics are covered by the op and layer units.
fn model_micro(seed: u64) -> Result<UnitOutput> {
    let cfg = ModelConfig::micro();
    let net: Net<f64> = Net::new(&cfg, seed)?;
    let samples: Vec<_> = (0..4).map(|i| generate_sample(cfg.input_size, seed, i)).collect();
    let images = Tensor::new(&[4, 3, 16, 16], samples.iter().flat_map(|s| s.image.iter().map(|&v| v as f64)).collect())?;
    let masks = Tensor::new(&[4, 1, 16, 16], samples.iter().flat_map(|s| s.mask.iter().map(|&v| v as f64)).collect())?;
    let loss = LossConfig::default();
        let mut params = net.params.clone();
    let mut warm = Ctx::train(&mut params);
    batch_loss(&net.arch, &mut warm, &images, &masks, &loss)?;
    drop(warm);
    param_check(&params, seed, Some(3), false, |ctx| batch_loss(&net.arch, ctx, &images, &masks, &loss))
}
