//! Central finite-difference checks against reverse-mode gradients.
//!
//! Runs on `f64`. Each probe rebuilds the graph on a fresh tape, so probes are
//! independent and may run on separate threads.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Tape, Tensor, Var};
use crate::error::Result;
use crate::parallel::map_indexed;

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    pub step: f64,
    /// Check at most this many coordinates per input (sampled without replacement).
    pub max_coords: Option<usize>,
    /// Magnitudes below this are compared absolutely.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, max_coords: None, floor: 1e-6, seed: 0 }
    }
}

/// Worst coordinate for one checked input.
#[derive(Clone, Debug)]
pub struct Probe {
    pub name: String,
    pub max_rel_error: f64,
    pub coords: usize,
    pub worst_coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Probe {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub(crate) fn pick_coords(len: usize, max: Option<usize>, seed: u64) -> Vec<usize> {
    match max {
        Some(m) if m < len => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v = sample(&mut rng, len, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Compares analytic gradients with a per-coordinate numeric estimate.
pub(crate) fn compare(
    name: &str,
    analytic: &[f64],
    coords: &[usize],
    floor: f64,
    numeric: impl Fn(usize) -> Result<f64> + Sync + Send,
) -> Result<Probe> {
    let nums = map_indexed(coords.len(), |i| numeric(coords[i]));
    let mut probe = Probe {
        name: name.to_string(),
        max_rel_error: 0.0,
        coords: coords.len(),
        worst_coord: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (&c, n) in coords.iter().zip(nums) {
        let n = n?;
        let err = rel_error(analytic[c], n, floor);
        if err > probe.max_rel_error || err.is_nan() {
            probe.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
            probe.worst_coord = c;
            probe.analytic = analytic[c];
            probe.numeric = n;
        }
    }
    Ok(probe)
}

/// Checks `d build(inputs) / d inputs[i]` for every input. `build` must map
/// leaf vars (in input order) to a scalar output var.
pub fn check<F>(inputs: &[Tensor<f64>], opts: GradcheckOptions, build: F) -> Result<Vec<Probe>>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + Sync + Send,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = perturbed.iter().map(|x| t.param(x.clone())).collect();
        let o = build(&mut t, &vs)?;
        Ok(t.value(o).data()[0])
    };

    let mut probes = Vec::with_capacity(inputs.len());
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; input.len()]);
        let coords = pick_coords(input.len(), opts.max_coords, opts.seed.wrapping_add(i as u64));
        let probe = compare(&format!("input{}", i), &analytic, &coords, opts.floor, |c| {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[c] += opts.step;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[c] -= opts.step;
            Ok((eval(&plus)? - eval(&minus)?) / (2.0 * opts.step))
        })?;
        probes.push(probe);
    }
    Ok(probes)
}

/// Worst relative error across probes.
pub fn max_error(probes: &[Probe]) -> f64 {
    probes.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
}
