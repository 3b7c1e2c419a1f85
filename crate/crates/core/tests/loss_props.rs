use proptest::prelude::*;

use c4net::losses::{self, LossConfig};
use c4net::{Tape, Tensor};

const SIDE: usize = 6;
const N: usize = 2 * SIDE * SIDE;

fn case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (prop::collection::vec(0.05f64..0.95, N), prop::collection::vec(any::<bool>(), N))
        .prop_map(|(s, g)| (s, g.into_iter().map(|b| b as u8 as f64).collect()))
}

fn tensor(v: Vec<f64>) -> Tensor<f64> {
    Tensor::new(&[2, 1, SIDE, SIDE], v).unwrap()
}

/// `(wbce, wiou, wel)` of a prediction.
fn all_losses(s: &[f64], gt: &Tensor<f64>, omega: &Tensor<f64>) -> (f64, f64, f64) {
    let cfg = LossConfig { window_k: 3, ..LossConfig::default() };
    let mut tape = Tape::new();
    let sv = tape.constant(tensor(s.to_vec()));
    let b = losses::wbce(&mut tape, sv, gt, omega, &cfg).unwrap();
    let u = losses::wiou(&mut tape, sv, gt, omega).unwrap();
    let e = losses::wel(&mut tape, sv, gt, omega, &cfg).unwrap();
    let v = |x| tape.value(x).data()[0];
    (v(b), v(u), v(e))
}

fn omega_for(gt: &Tensor<f64>) -> Tensor<f64> {
    losses::weight_map(gt, &LossConfig { window_k: 3, ..LossConfig::default() }).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn losses_stay_in_range((s, g) in case()) {
        let gt = tensor(g);
        let (b, u, e) = all_losses(&s, &gt, &omega_for(&gt));
        prop_assert!(b >= 0.0);
        prop_assert!((0.0..=1.0).contains(&u));
        prop_assert!((0.0..=1.0).contains(&e));
    }

    #[test]
    fn uniform_weight_scaling_is_invisible((s, g) in case(), c in 0.1f64..10.0) {
        let gt = tensor(g);
        let omega = omega_for(&gt);
        let scaled = omega.map(|w| w * c);
        let (b0, u0, e0) = all_losses(&s, &gt, &omega);
        let (b1, u1, e1) = all_losses(&s, &gt, &scaled);
        prop_assert!((b0 - b1).abs() <= 1e-12 * b0.abs().max(1.0));
        prop_assert!((u0 - u1).abs() <= 1e-12);
        prop_assert!((e0 - e1).abs() <= 1e-12);
    }

    #[test]
    fn wel_is_monotone((s, g) in case(), idx in 0..N, delta in 0.0f64..0.5) {
        let gt = tensor(g.clone());
        let omega = omega_for(&gt);
        let (_, _, before) = all_losses(&s, &gt, &omega);
        let mut raised = s.clone();
        raised[idx] = (raised[idx] + delta).min(1.0);
        let (_, _, after) = all_losses(&raised, &gt, &omega);
        if g[idx] == 0.0 {
            prop_assert!(after >= before - 1e-15);
        } else {
            prop_assert!(after <= before + 1e-15);
        }
    }

    /// Every maximum of the weight map sits within the window radius of a
    /// pixel whose 4-neighbourhood crosses the mask boundary.
    /// Foreground pixels on the image edge count as boundary pixels.
    #[test]
    fn weight_peaks_hug_boundaries(g in prop::collection::vec(any::<bool>(), 10 * 10), k in prop::sample::select(vec![3usize, 5, 7])) {
        prop_assume!(g.iter().any(|&b| b) && g.iter().any(|&b| !b));
        let gt = Tensor::new(&[1, 1, 10, 10], g.iter().map(|&b| b as u8 as f64).collect()).unwrap();
        let omega = losses::weight_map(&gt, &LossConfig { window_k: k, ..LossConfig::default() }).unwrap();
        let w = omega.data();
        let peak = w.iter().copied().fold(f64::MIN, f64::max);
        let at = |y: i64, x: i64| g[(y * 10 + x) as usize];
        let mut boundary = Vec::new();
        for y in 0..10i64 {
            for x in 0..10i64 {
                // the zero padding outside the image counts as background
                let differs = [(0, 1), (1, 0), (0, -1), (-1, 0)].iter().any(|&(dy, dx)| {
                    let (ny, nx) = (y + dy, x + dx);
                    let inside = (0..10).contains(&ny) && (0..10).contains(&nx);
                    (inside && at(ny, nx)) != at(y, x)
                });
                if differs {
                    boundary.push((y, x));
                }
            }
        }
        let r = (k / 2) as i64;
        for (i, &v) in w.iter().enumerate() {
            if v == peak {
                let (y, x) = ((i / 10) as i64, (i % 10) as i64);
                prop_assert!(boundary.iter().any(|&(by, bx)| (by - y).abs().max((bx - x).abs()) <= r), "peak at ({}, {})", y, x);
            }
        }
    }
}
