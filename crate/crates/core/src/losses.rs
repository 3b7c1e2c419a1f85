//! Edge-weighted loss family: the boundary weight map, weighted BCE,
//! weighted IoU, the excessiveness loss, and the multi-level total.
//!
//! Every loss is computed per batch item and averaged over the batch. The
//! ground truth and weight map enter the tape as constants.

use crate::autograd::{kernels, Float, Tape, Tensor, Var};
use crate::error::{contract_err, shape_err, Result};
use crate::model::LEVELS;

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    /// Weight-map gain.
    pub lambda_tilde: f64,
    /// Odd window size of the local ground-truth mean.
    pub window_k: usize,
    /// True-positive weight in the excessiveness loss.
    pub gamma: f64,
    /// Probability clamp before logarithms.
    pub eps: f64,
    /// Per-level weights `1 / 2^i`.
    pub level_weights: [f64; LEVELS],
    /// Include the excessiveness term (level 1) in the total.
    pub excessiveness: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_tilde: 5.0,
            window_k: 15,
            gamma: 1.0,
            eps: 1e-7,
            level_weights: std::array::from_fn(|i| 1.0 / (1u32 << i) as f64),
            excessiveness: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_k % 2 == 0 {
            return contract_err(format!("window_k must be odd, got {}", self.window_k));
        }
        if !(self.eps > 0.0 && self.eps <= 1e-3) {
            return contract_err(format!("eps must lie in (0, 1e-3], got {}", self.eps));
        }
        if !(self.gamma > 0.0) || !(self.lambda_tilde >= 0.0) {
            return contract_err("gamma must be positive and lambda_tilde nonnegative");
        }
        Ok(())
    }
}

fn check_binary<T: Float>(gt: &Tensor<T>) -> Result<()> {
    if gt.data().iter().any(|&v| v != T::zero() && v != T::one()) {
        return contract_err("ground truth must be binary");
    }
    Ok(())
}

/// `ω = 1 + λ̃ |window_mean(Gt) − Gt|`, window mean over a zero-padded
/// `k x k` window divided by `k²` everywhere (borders included).
pub fn weight_map<T: Float>(gt: &Tensor<T>, cfg: &LossConfig) -> Result<Tensor<T>> {
    let k = cfg.window_k;
    if k % 2 == 0 {
        return contract_err(format!("window size must be odd, got {}", k));
    }
    check_binary(gt)?;
    let [n, c, h, w] = gt.dims4();
    let r = k / 2;
    let norm = (k * k) as f64;
    let lambda = cfg.lambda_tilde;
    let mut out = Vec::with_capacity(gt.len());
    for p in 0..n * c {
        let plane = &gt.data()[p * h * w..(p + 1) * h * w];
        // integral image with a zero border row/column
        let mut integral = vec![0.0f64; (h + 1) * (w + 1)];
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += plane[y * w + x].as_f64();
                integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
            }
        }
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
                let s = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0]
                    + integral[y0 * (w + 1) + x0];
                let g = plane[y * w + x].as_f64();
                out.push(T::from_f64(1.0 + lambda * (s / norm - g).abs()));
            }
        }
    }
    Tensor::new(gt.shape(), out)
}

fn check_pair<T: Float>(tape: &Tape<T>, s: Var, gt: &Tensor<T>, omega: &Tensor<T>) -> Result<()> {
    if tape.shape(s) != gt.shape() || gt.shape() != omega.shape() {
        return shape_err(format!(
            "prediction {:?}, ground truth {:?} and weights {:?} must match",
            tape.shape(s),
            gt.shape(),
            omega.shape()
        ));
    }
    Ok(())
}

fn per_item_sums<T: Float>(t: &Tensor<T>) -> Vec<T> {
    let n = t.shape()[0];
    t.data().chunks(t.len() / n).map(|c| c.iter().copied().sum()).collect()
}

fn zip_map<T: Float>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape(), data).expect("equal shapes")
}

/// Numerator / denominator per item, with items whose denominator is zero
/// mapped to 0. Returns the batch mean.
fn safe_ratio_mean<T: Float>(tape: &mut Tape<T>, num: Var, den: Var) -> Result<Var> {
    let n = tape.value(den).len();
    let fix: Vec<T> = tape.value(den).data().iter().map(|&d| if d == T::zero() { T::one() } else { T::zero() }).collect();
    let fix = tape.constant(Tensor::new(&[n], fix)?);
    let den = tape.add(den, fix)?;
    let ratio = tape.div(num, den)?;
    Ok(tape.mean(ratio))
}

/// Weighted binary cross-entropy, normalized by the weight sum per item.
pub fn wbce<T: Float>(tape: &mut Tape<T>, s: Var, gt: &Tensor<T>, omega: &Tensor<T>, cfg: &LossConfig) -> Result<Var> {
    check_pair(tape, s, gt, omega)?;
    let eps = T::from_f64(cfg.eps);
    let sc = tape.clamp(s, eps, T::one() - eps);
    let log_s = tape.log(sc);
    let neg = tape.scale(sc, -T::one());
    let comp = tape.offset(neg, T::one());
    let log_1s = tape.log(comp);
    let pos_w = tape.constant(zip_map(gt, omega, |g, w| g * w));
    let neg_w = tape.constant(zip_map(gt, omega, |g, w| (T::one() - g) * w));
    let a = tape.mul(log_s, pos_w)?;
    let b = tape.mul(log_1s, neg_w)?;
    let ab = tape.add(a, b)?;
    let per = tape.sum_items(ab);
    let n = gt.shape()[0];
    let inv: Vec<T> = per_item_sums(omega).into_iter().map(|w| -T::one() / w).collect();
    let inv = tape.constant(Tensor::new(&[n], inv)?);
    let per = tape.mul(per, inv)?;
    Ok(tape.mean(per))
}

/// `1 − Σ S·Gt·ω / Σ (S + Gt − S·Gt)·ω` per item; 0 when the union is empty.
pub fn wiou<T: Float>(tape: &mut Tape<T>, s: Var, gt: &Tensor<T>, omega: &Tensor<T>) -> Result<Var> {
    check_pair(tape, s, gt, omega)?;
    let n = gt.shape()[0];
    let pos_w = zip_map(gt, omega, |g, w| g * w);
    let gt_mass = per_item_sums(&pos_w);
    let pos_w = tape.constant(pos_w);
    let neg_w = tape.constant(zip_map(gt, omega, |g, w| (T::one() - g) * w));
    let si = tape.mul(s, pos_w)?;
    let inter = tape.sum_items(si);
    // S + Gt − S·Gt = S·(1 − Gt) + Gt for binary Gt
    let so = tape.mul(s, neg_w)?;
    let outside = tape.sum_items(so);
    let mass = tape.constant(Tensor::new(&[n], gt_mass)?);
    let union = tape.add(outside, mass)?;
    let iou = safe_ratio_mean(tape, inter, union)?;
    let neg = tape.scale(iou, -T::one());
    Ok(tape.offset(neg, T::one()))
}

/// Excessiveness loss `ωFP / (ωFP + γ·ωTP)` with `ωFP = Σ relu(S − Gt)·ω`
/// and `ωTP = Σ S·Gt·ω`; 0 when both vanish.
pub fn wel<T: Float>(tape: &mut Tape<T>, s: Var, gt: &Tensor<T>, omega: &Tensor<T>, cfg: &LossConfig) -> Result<Var> {
    check_pair(tape, s, gt, omega)?;
    let g = tape.constant(gt.clone());
    let w = tape.constant(omega.clone());
    let diff = tape.sub(s, g)?;
    let excess = tape.relu(diff);
    let fpw = tape.mul(excess, w)?;
    let fp = tape.sum_items(fpw);
    let pos_w = tape.constant(zip_map(gt, omega, |g, w| g * w));
    let tpw = tape.mul(s, pos_w)?;
    let tp = tape.sum_items(tpw);
    let tp = tape.scale(tp, T::from_f64(cfg.gamma));
    let den = tape.add(fp, tp)?;
    safe_ratio_mean(tape, fp, den)
}

/// Individual terms of the multi-level loss.
#[derive(Clone, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub wbce: Vec<Var>,
    pub wiou: Vec<Var>,
    pub wel: Option<Var>,
}

/// `L = L_wel(1) + Σ_i w_i (L_wbce(i) + L_wiou(i))`, accumulated in level
/// order. `gts[i]` must match the resolution of `side[i]`.
pub fn total_loss<T: Float>(tape: &mut Tape<T>, side: &[Var], gts: &[Tensor<T>], cfg: &LossConfig) -> Result<LossTerms> {
    if side.len() != LEVELS || gts.len() != LEVELS {
        return contract_err(format!("expected {} levels, got {} predictions and {} masks", LEVELS, side.len(), gts.len()));
    }
    let mut terms = LossTerms { total: side[0], wbce: Vec::new(), wiou: Vec::new(), wel: None };
    let mut acc: Option<Var> = None;
    for (i, (&s, gt)) in side.iter().zip(gts).enumerate() {
        let omega = weight_map(gt, cfg)?;
        if i == 0 && cfg.excessiveness {
            let el = wel(tape, s, gt, &omega, cfg)?;
            terms.wel = Some(el);
            acc = Some(el);
        }
        let b = wbce(tape, s, gt, &omega, cfg)?;
        let u = wiou(tape, s, gt, &omega)?;
        terms.wbce.push(b);
        terms.wiou.push(u);
        let pair = tape.add(b, u)?;
        let weighted = tape.scale(pair, T::from_f64(cfg.level_weights[i]));
        acc = Some(match acc {
            Some(a) => tape.add(a, weighted)?,
            None => weighted,
        });
    }
    terms.total = acc.expect("five levels");
    Ok(terms)
}

/// Area-average `gt` down to `size x size`, then threshold at 0.5 (inclusive).
pub fn downsample_mask<T: Float>(gt: &Tensor<T>, size: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = gt.dims4();
    if size > h || size > w {
        return contract_err(format!("cannot downsample {}x{} to {}", h, w, size));
    }
    if size == h && size == w {
        return Ok(gt.clone());
    }
    let ybins = kernels::adaptive_bins(h, size);
    let xbins = kernels::adaptive_bins(w, size);
    let avg = kernels::bin_pool_forward(gt.data(), n * c, h, w, &ybins, &xbins);
    let half = T::from_f64(0.5);
    let data = avg.into_iter().map(|v| if v >= half { T::one() } else { T::zero() }).collect();
    Tensor::new(&[n, c, size, size], data)
}

/// Ground truth matched to every supervision level: level 1 at full input
/// resolution (the upsampled prediction), deeper levels at native size.
pub fn mask_pyramid<T: Float>(gt: &Tensor<T>, resolutions: &[usize; LEVELS]) -> Result<Vec<Tensor<T>>> {
    let mut out = vec![gt.clone()];
    for &r in &resolutions[1..] {
        out.push(downsample_mask(gt, r)?);
    }
    Ok(out)
}
