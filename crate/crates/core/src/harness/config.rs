//! Flat `key = value` run configuration. `#` starts a comment; unknown keys
//! and repeated keys are errors.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::str::FromStr;

use super::augment::AugmentConfig;
use super::optim::SgdConfig;
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::model::{DecoderMode, ModelConfig, LEVELS};

/// Encoder rate over head rate.
pub const LR_RATIO: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub lr_head: f64,
    pub lr_encoder: f64,
    pub warmup_fraction: f64,
    /// Share of the dataset (taken from the end) held out for validation.
    pub val_fraction: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 8,
            momentum: 0.9,
            weight_decay: 0.0005,
            lr_head: 0.05,
            lr_encoder: 0.005,
            warmup_fraction: 0.1,
            val_fraction: 0.1,
            seed: 0,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be positive");
        }
        if !(self.lr_head > 0.0 && self.lr_encoder > 0.0) {
            return bad("learning rates must be positive");
        }
        if ((self.lr_encoder / self.lr_head) - LR_RATIO).abs() > 1e-9 {
            return bad("lr_encoder must be 0.1 x lr_head");
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return bad("momentum must lie in [0, 1) and weight_decay be nonnegative");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) || !(0.0..1.0).contains(&self.val_fraction) {
            return bad("warmup_fraction and val_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig { momentum: self.momentum, weight_decay: self.weight_decay, lr_encoder: self.lr_encoder, lr_head: self.lr_head }
    }
}

/// Everything a training run needs besides data.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{}: cannot parse {:?}", key, v)))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{}: expected true or false, got {:?}", key, v))),
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {}", lineno + 1, key)));
            }
            cfg.set(key, value).map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, e)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let (m, t, l) = (&mut self.model, &mut self.train, &mut self.loss);
        match key {
            "encoder_channels" => {
                let list = parse_list(key, v)?;
                m.encoder_channels = list
                    .try_into()
                    .map_err(|_| Error::Config(format!("encoder_channels needs {} entries", LEVELS)))?;
            }
            "input_size" => m.input_size = parse(key, v)?,
            "cf" => m.cf = parse(key, v)?,
            "pyramid_sizes" => m.pyramid_sizes = parse_list(key, v)?,
            "attention_reduction" => m.attention_reduction = parse(key, v)?,
            "decoder_mode" => m.decoder_mode = DecoderMode::from_str(v)?,
            "shortcuts" => m.shortcuts = parse_bool(key, v)?,
            "psm" => m.psm = parse_bool(key, v)?,
            "encoder_residual" => m.encoder_residual = parse_bool(key, v)?,
            "epochs" => t.epochs = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "momentum" => t.momentum = parse(key, v)?,
            "weight_decay" => t.weight_decay = parse(key, v)?,
            "lr_head" => t.lr_head = parse(key, v)?,
            "lr_encoder" => t.lr_encoder = parse(key, v)?,
            "warmup_fraction" => t.warmup_fraction = parse(key, v)?,
            "val_fraction" => t.val_fraction = parse(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "crop" => t.augment.crop = parse_bool(key, v)?,
            "flip" => t.augment.flip = parse_bool(key, v)?,
            "lambda_tilde" => l.lambda_tilde = parse(key, v)?,
            "window_k" => l.window_k = parse(key, v)?,
            "gamma" => l.gamma = parse(key, v)?,
            "eps" => l.eps = parse(key, v)?,
            "excessiveness" => l.excessiveness = parse_bool(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {:?}", key))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.loss.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Serializes every key; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let (m, t, l) = (&self.model, &self.train, &self.loss);
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{} = {}", k, v);
        };
        kv("encoder_channels", join(&m.encoder_channels));
        kv("input_size", m.input_size.to_string());
        kv("cf", m.cf.to_string());
        kv("pyramid_sizes", join(&m.pyramid_sizes));
        kv("attention_reduction", m.attention_reduction.to_string());
        kv("decoder_mode", m.decoder_mode.to_string());
        kv("shortcuts", m.shortcuts.to_string());
        kv("psm", m.psm.to_string());
        kv("encoder_residual", m.encoder_residual.to_string());
        kv("epochs", t.epochs.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("momentum", format!("{:?}", t.momentum));
        kv("weight_decay", format!("{:?}", t.weight_decay));
        kv("lr_head", format!("{:?}", t.lr_head));
        kv("lr_encoder", format!("{:?}", t.lr_encoder));
        kv("warmup_fraction", format!("{:?}", t.warmup_fraction));
        kv("val_fraction", format!("{:?}", t.val_fraction));
        kv("seed", t.seed.to_string());
        kv("crop", t.augment.crop.to_string());
        kv("flip", t.augment.flip.to_string());
        kv("lambda_tilde", format!("{:?}", l.lambda_tilde));
        kv("window_k", l.window_k.to_string());
        kv("gamma", format!("{:?}", l.gamma));
        kv("eps", format!("{:?}", l.eps));
        kv("excessiveness", l.excessiveness.to_string());
        s
    }
}
