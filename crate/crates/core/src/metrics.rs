//! Salient-object-detection metrics: MAE, precision/recall, F-measure with
//! β² = 0.3, E-measure, PR/F curves over the 256 thresholds `j / 255`, and
//! false-positive / false-negative rates.
//!
//! A prediction pixel counts as positive when it is strictly greater than the
//! threshold. Swept metrics are derived from per-threshold confusion counts.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{shape_err, Error, Result};
use crate::parallel::map_indexed;

pub const THRESHOLDS: usize = 256;
pub const BETA_SQ: f64 = 0.3;
const ALIGN_EPS: f64 = 1e-12;

pub fn threshold(j: usize) -> f64 {
    j as f64 / 255.0
}

/// A soft prediction in `[0, 1]` and its binary ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskPair {
    pub id: String,
    pub height: usize,
    pub width: usize,
    pub pred: Vec<f64>,
    pub gt: Vec<bool>,
}

impl MaskPair {
    pub fn new(id: impl Into<String>, height: usize, width: usize, pred: Vec<f64>, gt: Vec<bool>) -> Result<Self> {
        if pred.len() != height * width || gt.len() != pred.len() {
            return shape_err(format!("mask pair needs {}x{} maps, got {} / {}", height, width, pred.len(), gt.len()));
        }
        Ok(Self { id: id.into(), height, width, pred, gt })
    }

    /// Ground truth from gray levels in `[0, 1]`, binarized at 128/255.
    pub fn from_gray(id: impl Into<String>, height: usize, width: usize, pred: Vec<f64>, gt_gray: &[f64]) -> Result<Self> {
        let gt = gt_gray.iter().map(|&v| v >= 128.0 / 255.0).collect();
        Self::new(id, height, width, pred, gt)
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }
}

pub fn mae(pair: &MaskPair) -> f64 {
    let s: f64 = pair.pred.iter().zip(&pair.gt).map(|(&p, &g)| (p - if g { 1.0 } else { 0.0 }).abs()).sum();
    s / pair.len() as f64
}

/// Confusion counts of one binarization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn at(pair: &MaskPair, t: f64) -> Self {
        let mut c = Confusion::default();
        for (&p, &g) in pair.pred.iter().zip(&pair.gt) {
            match (p > t, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Precision is 1 with no predicted positives; recall is 1 with an empty
    /// ground truth.
    pub fn precision_recall(&self) -> (f64, f64) {
        let p = if self.tp + self.fp == 0 { 1.0 } else { self.tp as f64 / (self.tp + self.fp) as f64 };
        let r = if self.tp + self.fn_ == 0 { 1.0 } else { self.tp as f64 / (self.tp + self.fn_) as f64 };
        (p, r)
    }

    /// Enhanced-alignment score of the binarized map against the ground truth.
    pub fn e_measure(&self) -> f64 {
        let n = self.total() as f64;
        let gt_pos = (self.tp + self.fn_) as f64;
        let pred_pos = (self.tp + self.fp) as f64;
        if self.tp + self.fn_ == 0 {
            return 1.0 - pred_pos / n;
        }
        if self.fp + self.tn == 0 {
            return pred_pos / n;
        }
        let (mb, mg) = (pred_pos / n, gt_pos / n);
        let enhanced = |b: f64, g: f64| {
            let (pb, pg) = (b - mb, g - mg);
            let xi = 2.0 * pb * pg / (pb * pb + pg * pg + ALIGN_EPS);
            (xi + 1.0) * (xi + 1.0) / 4.0
        };
        (self.tp as f64 * enhanced(1.0, 1.0)
            + self.fp as f64 * enhanced(1.0, 0.0)
            + self.fn_ as f64 * enhanced(0.0, 1.0)
            + self.tn as f64 * enhanced(0.0, 0.0))
            / n
    }
}

pub fn precision_recall(pair: &MaskPair, t: f64) -> (f64, f64) {
    Confusion::at(pair, t).precision_recall()
}

/// `(1+β²)PR / (β²P + R)`, 0 when both are 0.
pub fn f_beta(precision: f64, recall: f64, beta_sq: f64) -> f64 {
    let den = beta_sq * precision + recall;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + beta_sq) * precision * recall / den
    }
}

pub fn e_measure(pair: &MaskPair, t: f64) -> f64 {
    Confusion::at(pair, t).e_measure()
}

/// `(mFP, mFN)`: false-positive and false-negative counts over pixel count.
pub fn fp_fn_rates(pair: &MaskPair, t: f64) -> (f64, f64) {
    let c = Confusion::at(pair, t);
    let n = c.total() as f64;
    (c.fp as f64 / n, c.fn_ as f64 / n)
}

/// Number of thresholds `j / 255` strictly below `p`.
fn thresholds_below(p: f64) -> usize {
    let mut m = ((p * 255.0).floor().max(0.0) as usize).min(THRESHOLDS);
    while m > 0 && p <= threshold(m - 1) {
        m -= 1;
    }
    while m < THRESHOLDS && p > threshold(m) {
        m += 1;
    }
    m
}

/// Confusion counts at every threshold, from one pass over the pixels.
pub fn sweep(pair: &MaskPair) -> Vec<Confusion> {
    let mut pos_hist = [0u64; THRESHOLDS + 1];
    let mut neg_hist = [0u64; THRESHOLDS + 1];
    let mut gt_pos = 0;
    for (&p, &g) in pair.pred.iter().zip(&pair.gt) {
        let m = thresholds_below(p);
        if g {
            pos_hist[m] += 1;
            gt_pos += 1;
        } else {
            neg_hist[m] += 1;
        }
    }
    let gt_neg = pair.len() as u64 - gt_pos;
    // pixels positive at threshold j are those with m > j
    let mut out = vec![Confusion::default(); THRESHOLDS];
    let (mut tp, mut fp) = (0, 0);
    for j in (0..THRESHOLDS).rev() {
        tp += pos_hist[j + 1];
        fp += neg_hist[j + 1];
        out[j] = Confusion { tp, fp, fn_: gt_pos - tp, tn: gt_neg - fp };
    }
    out
}

/// Per-image results.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageMetrics {
    pub id: String,
    pub mae: f64,
    /// Per-threshold precision, recall, F and E.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f: Vec<f64>,
    pub e: Vec<f64>,
    pub mfp: f64,
    pub mfn: f64,
}

impl ImageMetrics {
    pub fn mean_f(&self) -> f64 {
        self.f.iter().sum::<f64>() / THRESHOLDS as f64
    }

    pub fn mean_e(&self) -> f64 {
        self.e.iter().sum::<f64>() / THRESHOLDS as f64
    }
}

pub fn image_metrics(pair: &MaskPair) -> ImageMetrics {
    let counts = sweep(pair);
    let mut m = ImageMetrics {
        id: pair.id.clone(),
        mae: mae(pair),
        precision: Vec::with_capacity(THRESHOLDS),
        recall: Vec::with_capacity(THRESHOLDS),
        f: Vec::with_capacity(THRESHOLDS),
        e: Vec::with_capacity(THRESHOLDS),
        mfp: 0.0,
        mfn: 0.0,
    };
    for c in &counts {
        let (p, r) = c.precision_recall();
        m.precision.push(p);
        m.recall.push(r);
        m.f.push(f_beta(p, r, BETA_SQ));
        m.e.push(c.e_measure());
    }
    (m.mfp, m.mfn) = fp_fn_rates(pair, 0.5);
    m
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FPoint {
    pub threshold: f64,
    pub f_beta: f64,
}

/// Dataset summary and curves.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub mean_f: f64,
    pub e_xi: f64,
    pub mfp: f64,
    pub mfn: f64,
    pub pr_curve: Vec<PrPoint>,
    pub f_curve: Vec<FPoint>,
    pub count: usize,
    pub images: Vec<ImageMetrics>,
}

fn nonempty(pairs: &[MaskPair]) -> Result<()> {
    if pairs.is_empty() {
        return Err(Error::Contract("metrics need at least one mask pair".into()));
    }
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    values.sum::<f64>() / n as f64
}

/// Evaluates every pair (in parallel over images) and aggregates in input order.
pub fn evaluate(pairs: &[MaskPair]) -> Result<MetricsReport> {
    nonempty(pairs)?;
    let images = map_indexed(pairs.len(), |i| image_metrics(&pairs[i]));
    let n = images.len();
    let mut pr_curve = Vec::with_capacity(THRESHOLDS);
    let mut f_curve = Vec::with_capacity(THRESHOLDS);
    for j in 0..THRESHOLDS {
        pr_curve.push(PrPoint {
            threshold: threshold(j),
            precision: mean(images.iter().map(|m| m.precision[j]), n),
            recall: mean(images.iter().map(|m| m.recall[j]), n),
        });
        f_curve.push(FPoint { threshold: threshold(j), f_beta: mean(images.iter().map(|m| m.f[j]), n) });
    }
    Ok(MetricsReport {
        mae: mean(images.iter().map(|m| m.mae), n),
        mean_f: mean(f_curve.iter().map(|p| p.f_beta), THRESHOLDS),
        e_xi: mean(images.iter().map(ImageMetrics::mean_e), n),
        mfp: mean(images.iter().map(|m| m.mfp), n),
        mfn: mean(images.iter().map(|m| m.mfn), n),
        pr_curve,
        f_curve,
        count: n,
        images,
    })
}

/// Mean over thresholds of the dataset-mean F.
pub fn mean_f(pairs: &[MaskPair]) -> Result<f64> {
    Ok(evaluate(pairs)?.mean_f)
}

/// E-measure averaged over thresholds, then over images.
pub fn mean_e(pairs: &[MaskPair]) -> Result<f64> {
    Ok(evaluate(pairs)?.e_xi)
}

pub fn pr_curve(pairs: &[MaskPair]) -> Result<Vec<PrPoint>> {
    Ok(evaluate(pairs)?.pr_curve)
}

pub fn f_curve(pairs: &[MaskPair]) -> Result<Vec<FPoint>> {
    Ok(evaluate(pairs)?.f_curve)
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,mae,mF,e_xi,mFP,mFN\n");
        for m in &self.images {
            let _ = writeln!(s, "{},{:.6},{:.6},{:.6},{:.6},{:.6}", m.id, m.mae, m.mean_f(), m.mean_e(), m.mfp, m.mfn);
        }
        let _ = writeln!(s, "ALL,{:.6},{:.6},{:.6},{:.6},{:.6}", self.mae, self.mean_f, self.e_xi, self.mfp, self.mfn);
        s
    }

    pub fn pr_csv(&self) -> String {
        let mut s = String::from("threshold,precision,recall\n");
        for p in &self.pr_curve {
            let _ = writeln!(s, "{:.6},{:.6},{:.6}", p.threshold, p.precision, p.recall);
        }
        s
    }

    pub fn f_csv(&self) -> String {
        let mut s = String::from("threshold,f_beta\n");
        for p in &self.f_curve {
            let _ = writeln!(s, "{:.6},{:.6}", p.threshold, p.f_beta);
        }
        s
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(pred: &[f64], gt: &[u8]) -> MaskPair {
        let n = (pred.len() as f64).sqrt() as usize;
        MaskPair::new("t", n, n, pred.to_vec(), gt.iter().map(|&g| g == 1).collect()).unwrap()
    }

    #[test]
    fn mae_hand_example() {
        let p = pair(&[0.2, 0.8, 0.5, 0.0], &[0, 1, 1, 0]);
        assert!((mae(&p) - 0.225).abs() < 1e-15);
    }

    #[test]
    fn mae_identity_and_complement() {
        let p = pair(&[1.0, 0.0, 0.0, 1.0], &[1, 0, 0, 1]);
        assert_eq!(mae(&p), 0.0);
        let q = pair(&[0.0, 1.0, 1.0, 0.0], &[1, 0, 0, 1]);
        assert_eq!(mae(&q), 1.0);
    }

    #[test]
    fn f_beta_examples() {
        assert_eq!(f_beta(1.0, 1.0, BETA_SQ), 1.0);
        assert!((f_beta(0.37, 0.37, BETA_SQ) - 0.37).abs() < 1e-15);
        assert!((f_beta(0.8, 0.5, BETA_SQ) - 0.52 / 0.74).abs() < 1e-15);
        assert_eq!(f_beta(0.0, 0.0, BETA_SQ), 0.0);
    }

    #[test]
    fn perfect_binary_prediction() {
        let p = pair(&[1.0, 0.0, 1.0, 0.0], &[1, 0, 1, 0]);
        for t in [0.1, 0.5, 0.9] {
            assert_eq!(precision_recall(&p, t), (1.0, 1.0));
            assert!((e_measure(&p, t) - 1.0).abs() < 1e-11);
        }
        assert_eq!(fp_fn_rates(&p, 0.5), (0.0, 0.0));
    }

    #[test]
    fn anti_aligned_balanced_mask_scores_zero() {
        let p = pair(&[0.0, 1.0, 0.0, 1.0], &[1, 0, 1, 0]);
        assert!(e_measure(&p, 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_masks_are_aligned() {
        let p = pair(&[0.0; 4], &[0; 4]);
        assert_eq!(e_measure(&p, 0.5), 1.0);
        assert_eq!(precision_recall(&p, 0.5), (1.0, 1.0));
    }

    #[test]
    fn all_positive_prediction_rates() {
        let p = pair(&[1.0; 4], &[1, 1, 0, 0]);
        assert_eq!(fp_fn_rates(&p, 0.5), (0.5, 0.0));
        assert_eq!(precision_recall(&p, 0.0).1, 1.0);
    }

    #[test]
    fn threshold_bucketing_is_exact() {
        for j in 0..THRESHOLDS {
            let t = threshold(j);
            assert_eq!(thresholds_below(t), j);
            let above = t + 1e-12;
            assert!(thresholds_below(above) == j + 1);
        }
        assert_eq!(thresholds_below(0.0), 0);
        assert_eq!(thresholds_below(1.0), 255);
    }

    #[test]
    fn empty_set_is_error() {
        assert!(evaluate(&[]).is_err());
    }
}
