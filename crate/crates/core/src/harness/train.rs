//! Training loop, validation and evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::augment;
use super::config::RunConfig;
use super::data::{batch, ToySample};
use super::optim::{Schedule, Sgd};
use crate::autograd::{Float, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{Ctx, LrGroup, ParamId, ParamStore};
use crate::losses::{mask_pyramid, total_loss, LossConfig};
use crate::metrics::MaskPair;
use crate::model::{checkpoint, Arch, Net, Outputs};

/// Per-epoch record.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean total loss over the epoch's batches.
    pub loss: f64,
    pub val_mae: f64,
    /// Rates used by the epoch's last step.
    pub lr_encoder: f64,
    pub lr_head: f64,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,loss,val_mae,lr_encoder,lr_head\n");
    for e in log {
        let _ = writeln!(s, "{},{:.9},{:.9},{:.9},{:.9}", e.epoch, e.loss, e.val_mae, e.lr_encoder, e.lr_head);
    }
    s
}

/// Trailing moving average with the given window.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            values[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Splits off the last `fraction` of samples (at least one, when more than
/// one sample exists) for validation.
pub fn split(samples: &[ToySample], fraction: f64) -> (&[ToySample], &[ToySample]) {
    let n = samples.len();
    let val = if n < 2 { 0 } else { ((n as f64 * fraction).round() as usize).clamp(1, n - 1) };
    samples.split_at(n - val)
}

/// The level-1 prediction at input resolution followed by the native-size
/// deeper side outputs: the inputs of the multi-level loss.
pub fn supervised(out: &Outputs) -> Vec<Var> {
    let mut v = out.side.clone();
    v[0] = out.prediction;
    v
}

/// Training loss of one batch, on the given pass.
pub fn batch_loss<T: Float>(arch: &Arch, ctx: &mut Ctx<'_, T>, images: &Tensor<T>, masks: &Tensor<T>, loss: &LossConfig) -> Result<Var> {
    let x = ctx.input(images.clone());
    let out = arch.forward(ctx, x)?;
    let gts = mask_pyramid(masks, &arch.config().resolutions())?;
    Ok(total_loss(&mut ctx.tape, &supervised(&out), &gts, loss)?.total)
}

/// One forward/backward pass in train mode. Returns the loss and gradients.
pub fn compute_gradients<T: Float>(net: &mut Net<T>, images: &Tensor<T>, masks: &Tensor<T>, loss: &LossConfig) -> Result<(f64, Vec<(ParamId, Vec<T>)>)> {
    let mut ctx = Ctx::train(&mut net.params);
    let total = batch_loss(&net.arch, &mut ctx, images, masks, loss)?;
    let value = ctx.tape.value(total).data()[0].as_f64();
    let mut grads = ctx.tape.backward(total)?;
    Ok((value, ctx.param_grads(&mut grads)))
}

/// Eval-mode predictions for `samples`, in order.
pub fn predict(net: &Net<f32>, samples: &[ToySample], batch_size: usize) -> Result<Vec<Vec<f32>>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let (images, _) = batch(chunk)?;
        let pred = net.predict(&images)?;
        let per = pred.len() / chunk.len();
        out.extend(pred.data().chunks_exact(per).map(<[f32]>::to_vec));
    }
    Ok(out)
}

pub fn mask_pairs(net: &Net<f32>, samples: &[ToySample], batch_size: usize) -> Result<Vec<MaskPair>> {
    predict(net, samples, batch_size)?
        .into_iter()
        .zip(samples)
        .map(|(p, s)| {
            MaskPair::new(s.id.clone(), s.size, s.size, p.into_iter().map(f64::from).collect(), s.mask.iter().map(|&m| m > 0.5).collect())
        })
        .collect()
}

pub fn mean_abs_error(net: &Net<f32>, samples: &[ToySample], batch_size: usize) -> Result<f64> {
    let preds = predict(net, samples, batch_size)?;
    let mut total = 0.0;
    for (p, s) in preds.iter().zip(samples) {
        total += p.iter().zip(&s.mask).map(|(&a, &b)| (a as f64 - b as f64).abs()).sum::<f64>() / p.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

pub struct TrainOutcome {
    pub net: Net<f32>,
    pub log: Vec<EpochLog>,
}

/// Minimizes the multi-level loss with SGD. Model initialization, shuffling
/// and augmentation all derive from `cfg.train.seed`.
pub fn train(cfg: &RunConfig, train_set: &[ToySample], val_set: &[ToySample]) -> Result<TrainOutcome> {
    train_with(cfg, train_set, val_set, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(cfg: &RunConfig, train_set: &[ToySample], val_set: &[ToySample], mut on_epoch: impl FnMut(&EpochLog)) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if let Some(s) = train_set.iter().chain(val_set).find(|s| s.size != cfg.model.input_size) {
        return Err(Error::Config(format!("sample {} is {}x{}, model expects {}", s.id, s.size, s.size, cfg.model.input_size)));
    }
    let t = &cfg.train;
    let mut net: Net<f32> = Net::new(&cfg.model, t.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed ^ 0x5EED_0F_DA7A);
    // an incomplete final batch is dropped when it would hold a single sample
    let full = train_set.len() / t.batch_size;
    let rem = train_set.len() % t.batch_size;
    let steps_per_epoch = full + usize::from(rem >= 2 || full == 0);
    let schedule = Schedule::new(steps_per_epoch * t.epochs, t.warmup_fraction);
    let sgd = t.sgd();
    let mut opt = Sgd::new(sgd, &net.params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(t.epochs);
    let mut step = 0;
    for epoch in 1..=t.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut factor = 0.0;
        for b in 0..steps_per_epoch {
            let idx = &order[b * t.batch_size..((b + 1) * t.batch_size).min(order.len())];
            let samples: Vec<ToySample> = idx.iter().map(|&i| augment(&train_set[i], t.augment, &mut rng)).collect();
            let (images, masks) = batch(&samples)?;
            let (loss, grads) = compute_gradients(&mut net, &images, &masks, &cfg.loss)?;
            if !loss.is_finite() || grads.iter().any(|(_, g)| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Diverged { epoch, step, loss });
            }
            factor = schedule.factor(step);
            opt.step(&mut net.params, &grads, factor)?;
            loss_sum += loss;
            step += 1;
        }
        let val_mae = if val_set.is_empty() { f64::NAN } else { mean_abs_error(&net, val_set, t.batch_size)? };
        let entry = EpochLog {
            epoch,
            loss: loss_sum / steps_per_epoch as f64,
            val_mae,
            lr_encoder: factor * sgd.max_lr(LrGroup::Encoder),
            lr_head: factor * sgd.max_lr(LrGroup::Head),
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { net, log })
}

pub const CHECKPOINT_FILE: &str = "checkpoint.c4nt";
pub const CONFIG_FILE: &str = "config.cfg";
pub const LOG_FILE: &str = "train_log.csv";

/// Writes the checkpoint, the resolved config (read back by `eval`) and the
/// epoch log into `dir`.
pub fn write_run(dir: &Path, cfg: &RunConfig, outcome: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut buf = Vec::new();
    checkpoint::save(&outcome.net.params, &mut buf)?;
    fs::write(dir.join(CHECKPOINT_FILE), buf)?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
    fs::write(dir.join(LOG_FILE), log_csv(&outcome.log))?;
    Ok(())
}

/// Rebuilds a network from a checkpoint and the `config.cfg` beside it.
pub fn load_run(checkpoint_path: &Path) -> Result<(RunConfig, Net<f32>)> {
    let dir = checkpoint_path.parent().unwrap_or(Path::new("."));
    let cfg_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::Config(format!("{}: {}", cfg_path.display(), e)))?;
    let cfg = RunConfig::parse(&text)?;
    let mut params = ParamStore::new();
    let arch = Arch::build(&cfg.model, &mut params, 0)?;
    let entries = checkpoint::load(&mut fs::File::open(checkpoint_path)?)?;
    checkpoint::apply(&mut params, &entries)?;
    Ok((cfg, Net { arch, params }))
}
