//! SGD with momentum and weight decay, and the warmup-then-decay schedule.

use crate::autograd::Float;
use crate::error::{Error, Result};
use crate::layers::{LrGroup, ParamId, ParamStore, Role};

/// Linear warmup from 0 to `max` over the first `warmup` fraction of steps,
/// then linear decay to 0 at `total`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl Schedule {
    pub fn new(total_steps: usize, warmup_fraction: f64) -> Self {
        let warmup_steps = ((total_steps as f64 * warmup_fraction).round() as usize).min(total_steps);
        Self { total_steps, warmup_steps }
    }

    /// Multiplier in `[0, 1]` applied to a group's maximum rate.
    pub fn factor(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            step as f64 / self.warmup_steps as f64
        } else if step >= self.total_steps {
            0.0
        } else {
            let decay = (self.total_steps - self.warmup_steps) as f64;
            (self.total_steps - step) as f64 / decay
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_encoder: f64,
    pub lr_head: f64,
}

impl SgdConfig {
    pub fn max_lr(&self, group: LrGroup) -> f64 {
        match group {
            LrGroup::Encoder => self.lr_encoder,
            LrGroup::Head => self.lr_head,
        }
    }
}

/// Per-parameter velocity buffers.
#[derive(Clone, Debug)]
pub struct Sgd<T> {
    cfg: SgdConfig,
    velocity: Vec<Vec<T>>,
}

impl<T: Float> Sgd<T> {
    pub fn new(cfg: SgdConfig, store: &ParamStore<T>) -> Self {
        let velocity = store.iter().map(|(_, p)| vec![T::zero(); p.tensor.len()]).collect();
        Self { cfg, velocity }
    }

    /// `v ← μv + g + λw`, `w ← w − lr·v` for every trainable parameter, where
    /// `lr = factor · max_lr(group)`. Parameters without a gradient see `g = 0`.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, Vec<T>)], factor: f64) -> Result<()> {
        let mut by_id: Vec<Option<&[T]>> = vec![None; store.len()];
        for (id, g) in grads {
            if g.len() != store.tensor(*id).len() {
                return Err(Error::Shape(format!("gradient length mismatch for {}", store.get(*id).name)));
            }
            by_id[id.index()] = Some(g);
        }
        let mu = T::from_f64(self.cfg.momentum);
        let wd = T::from_f64(self.cfg.weight_decay);
        let ids: Vec<ParamId> = store.ids().collect();
        for id in ids {
            let group = match store.get(id).role {
                Role::Trainable(g) => g,
                Role::RunningStat => continue,
            };
            let lr = T::from_f64(factor * self.cfg.max_lr(group));
            let v = &mut self.velocity[id.index()];
            let w = store.tensor_mut(id).data_mut();
            let g = by_id[id.index()];
            for i in 0..w.len() {
                let gi = g.map_or(T::zero(), |g| g[i]);
                v[i] = mu * v[i] + gi + wd * w[i];
                w[i] -= lr * v[i];
            }
        }
        Ok(())
    }
}
