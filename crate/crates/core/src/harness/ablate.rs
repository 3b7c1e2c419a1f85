//! Trains model variants under identical seeds and compares their metrics.
//!
//! Variant names are decoder modes (`C4Net`, `PipeCC`, ...), the loss toggles
//! `with_EL` / `without_EL`, or the cumulative module rows `baseline`, `+EL`,
//! `+CCM`, `+CEM`, `+PSM`.

use std::fmt::Write as _;
use std::str::FromStr;

use super::config::RunConfig;
use super::data::ToySample;
use super::train::{mask_pairs, train};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::model::{Aggregation, DecoderMode};

pub const MODULE_ROWS: [&str; 5] = ["baseline", "+EL", "+CCM", "+CEM", "+PSM"];
pub const LOSS_TOGGLES: [&str; 2] = ["with_EL", "without_EL"];

/// Run configuration of a named variant, derived from `base` (the full model).
pub fn variant(name: &str, base: &RunConfig) -> Result<RunConfig> {
    let mut cfg = base.clone();
    let (m, l) = (&mut cfg.model, &mut cfg.loss);
    let full = |m: &mut crate::model::ModelConfig| {
        m.shortcuts = true;
        m.psm = true;
        m.decoder_mode = DecoderMode::C4Net;
    };
    match name {
        "baseline" | "+EL" => {
            m.shortcuts = false;
            m.psm = false;
            l.excessiveness = name == "+EL";
        }
        "+CCM" => {
            m.shortcuts = true;
            m.psm = false;
            m.decoder_mode = DecoderMode::Pipe(Aggregation::Cat, Aggregation::Cat);
            l.excessiveness = true;
        }
        "+CEM" => {
            full(m);
            m.psm = false;
            l.excessiveness = true;
        }
        "+PSM" | "with_EL" | "without_EL" => {
            full(m);
            l.excessiveness = name != "without_EL";
        }
        mode => {
            full(m);
            m.decoder_mode = DecoderMode::from_str(mode)
                .map_err(|_| Error::Config(format!("unknown ablation mode {:?}", mode)))?;
            l.excessiveness = true;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Comma-separated mode list; every entry must name a variant.
pub fn parse_modes(list: &str, base: &RunConfig) -> Result<Vec<String>> {
    let modes: Vec<String> = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if modes.is_empty() {
        return Err(Error::Config("empty mode list".into()));
    }
    for m in &modes {
        variant(m, base)?;
    }
    Ok(modes)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub mae: f64,
    pub mean_f: f64,
    pub e_xi: f64,
    pub mfp: f64,
    pub mfn: f64,
}

impl Scores {
    fn mean(all: &[Scores]) -> Scores {
        let n = all.len() as f64;
        let avg = |f: fn(&Scores) -> f64| all.iter().map(f).sum::<f64>() / n;
        Scores { mae: avg(|s| s.mae), mean_f: avg(|s| s.mean_f), e_xi: avg(|s| s.e_xi), mfp: avg(|s| s.mfp), mfn: avg(|s| s.mfn) }
    }
}

/// One trained variant. `scores` is `None` when training diverged.
#[derive(Clone, Debug, PartialEq)]
pub struct Run {
    pub variant: String,
    pub seed: u64,
    pub scores: Option<Scores>,
}

/// Trains and scores one variant on one seed. Divergence of a mode known to
/// be unstable is reported as a missing score; any other divergence is an
/// error.
pub fn run_one(name: &str, base: &RunConfig, seed: u64, train_set: &[ToySample], val_set: &[ToySample]) -> Result<Run> {
    let mut cfg = variant(name, base)?;
    cfg.train.seed = seed;
    let outcome = match train(&cfg, train_set, val_set) {
        Ok(o) => o,
        Err(Error::Diverged { .. }) if cfg.model.decoder_mode.is_unstable() && cfg.model.shortcuts => {
            return Ok(Run { variant: name.to_string(), seed, scores: None });
        }
        Err(e) => return Err(e),
    };
    let report = evaluate(&mask_pairs(&outcome.net, val_set, cfg.train.batch_size)?)?;
    let scores = Scores { mae: report.mae, mean_f: report.mean_f, e_xi: report.e_xi, mfp: report.mfp, mfn: report.mfn };
    Ok(Run { variant: name.to_string(), seed, scores: Some(scores) })
}

/// Every variant on every seed, in mode-major order.
pub fn run_all(
    modes: &[String],
    base: &RunConfig,
    seeds: &[u64],
    train_set: &[ToySample],
    val_set: &[ToySample],
    mut on_run: impl FnMut(&Run),
) -> Result<Vec<Run>> {
    let mut out = Vec::new();
    for m in modes {
        for &s in seeds {
            let r = run_one(m, base, s, train_set, val_set)?;
            on_run(&r);
            out.push(r);
        }
    }
    Ok(out)
}

/// Mean scores of a variant over its stable runs.
pub fn mean_scores(runs: &[Run], variant: &str) -> Option<Scores> {
    let s: Vec<Scores> = runs.iter().filter(|r| r.variant == variant).filter_map(|r| r.scores).collect();
    (!s.is_empty()).then(|| Scores::mean(&s))
}

/// Per-seed rows followed by one `mean` row per variant.
pub fn report_csv(modes: &[String], runs: &[Run]) -> String {
    let mut s = String::from("variant,seed,mae,mF,e_xi,mFP,mFN,status\n");
    let row = |s: &mut String, v: &str, seed: &str, sc: Option<Scores>, status: &str| {
        let _ = match sc {
            Some(x) => writeln!(s, "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}", v, seed, x.mae, x.mean_f, x.e_xi, x.mfp, x.mfn, status),
            None => writeln!(s, "{},{},,,,,,{}", v, seed, status),
        };
    };
    for m in modes {
        let mine: Vec<&Run> = runs.iter().filter(|r| &r.variant == m).collect();
        for r in &mine {
            row(&mut s, m, &r.seed.to_string(), r.scores, if r.scores.is_some() { "ok" } else { "unstable" });
        }
        let unstable = mine.iter().filter(|r| r.scores.is_none()).count();
        let status = if unstable == 0 { "ok".to_string() } else { format!("unstable {}/{}", unstable, mine.len()) };
        row(&mut s, m, "mean", mean_scores(runs, m), &status);
    }
    s
}
