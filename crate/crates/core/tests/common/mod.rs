//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use c4net::metrics::MaskPair;

pub const STEPS: usize = 256;

/// Per-image metrics recomputed pixel by pixel at every threshold.
pub struct OracleImage {
    pub mae: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f: Vec<f64>,
    pub e: Vec<f64>,
    pub mfp: f64,
    pub mfn: f64,
}

pub struct OracleSet {
    pub mae: f64,
    pub mean_f: f64,
    pub e_xi: f64,
    pub mfp: f64,
    pub mfn: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f: Vec<f64>,
}

fn binarize(pred: &[f64], t: f64) -> Vec<bool> {
    pred.iter().map(|&p| p > t).collect()
}

fn counts(b: &[bool], gt: &[bool]) -> (f64, f64, f64) {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (&p, &g) in b.iter().zip(gt) {
        if p && g {
            tp += 1.0;
        } else if p {
            fp += 1.0;
        } else if g {
            fn_ += 1.0;
        }
    }
    (tp, fp, fn_)
}

/// Enhanced-alignment score: per-pixel bias maps and alignment, with the
/// usual conventions for an all-background or all-foreground ground truth.
fn enhanced_alignment(b: &[bool], gt: &[bool]) -> f64 {
    let n = b.len() as f64;
    let bf: Vec<f64> = b.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let gf: Vec<f64> = gt.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let mb = bf.iter().sum::<f64>() / n;
    let mg = gf.iter().sum::<f64>() / n;
    if mg == 0.0 {
        return bf.iter().map(|v| 1.0 - v).sum::<f64>() / n;
    }
    if mg == 1.0 {
        return mb;
    }
    let mut total = 0.0;
    for (x, y) in bf.iter().zip(&gf) {
        let (pb, pg) = (x - mb, y - mg);
        let xi = 2.0 * pb * pg / (pb * pb + pg * pg + 1e-12);
        total += (xi + 1.0) * (xi + 1.0) / 4.0;
    }
    total / n
}

pub fn oracle_image(pred: &[f64], gt: &[bool]) -> OracleImage {
    let n = pred.len() as f64;
    let mae = pred.iter().zip(gt).map(|(&p, &g)| (p - g as u8 as f64).abs()).sum::<f64>() / n;
    let mut img = OracleImage { mae, precision: vec![], recall: vec![], f: vec![], e: vec![], mfp: 0.0, mfn: 0.0 };
    for j in 0..STEPS {
        let b = binarize(pred, j as f64 / 255.0);
        let (tp, fp, fn_) = counts(&b, gt);
        let p = if tp + fp == 0.0 { 1.0 } else { tp / (tp + fp) };
        let r = if tp + fn_ == 0.0 { 1.0 } else { tp / (tp + fn_) };
        let f = if 0.3 * p + r == 0.0 { 0.0 } else { 1.3 * p * r / (0.3 * p + r) };
        img.precision.push(p);
        img.recall.push(r);
        img.f.push(f);
        img.e.push(enhanced_alignment(&b, gt));
    }
    let b = binarize(pred, 0.5);
    let (_, fp, fn_) = counts(&b, gt);
    img.mfp = fp / n;
    img.mfn = fn_ / n;
    img
}

pub fn oracle_set(pairs: &[MaskPair]) -> OracleSet {
    let imgs: Vec<OracleImage> = pairs.iter().map(|p| oracle_image(&p.pred, &p.gt)).collect();
    let n = imgs.len() as f64;
    let avg = |f: &dyn Fn(&OracleImage) -> f64| imgs.iter().map(f).sum::<f64>() / n;
    let per_t = |f: &dyn Fn(&OracleImage, usize) -> f64| (0..STEPS).map(|j| imgs.iter().map(|m| f(m, j)).sum::<f64>() / n).collect::<Vec<_>>();
    let f = per_t(&|m, j| m.f[j]);
    OracleSet {
        mae: avg(&|m| m.mae),
        mean_f: f.iter().sum::<f64>() / STEPS as f64,
        e_xi: avg(&|m| m.e.iter().sum::<f64>() / STEPS as f64),
        mfp: avg(&|m| m.mfp),
        mfn: avg(&|m| m.mfn),
        precision: per_t(&|m, j| m.precision[j]),
        recall: per_t(&|m, j| m.recall[j]),
        f,
    }
}

/// Random `side x side` pairs mixing continuous scores, scores sitting
/// exactly on thresholds, saturated scores, and empty or full masks.
pub fn random_pairs(count: usize, side: usize, seed: u64) -> Vec<MaskPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = side * side;
    (0..count)
        .map(|i| {
            let density = match i % 10 {
                0 => 0.0,
                1 => 1.0,
                _ => rng.gen_range(0.05..0.95),
            };
            let gt: Vec<bool> = (0..n).map(|_| rng.gen_bool(density)).collect();
            let pred: Vec<f64> = (0..n)
                .map(|k| match rng.gen_range(0..4) {
                    0 => rng.gen_range(0..=255) as f64 / 255.0,
                    1 => if gt[k] { 1.0 } else { 0.0 },
                    _ => rng.gen::<f64>(),
                })
                .collect();
            MaskPair::new(format!("p{}", i), side, side, pred, gt).unwrap()
        })
        .collect()
}
