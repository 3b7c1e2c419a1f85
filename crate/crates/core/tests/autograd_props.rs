use proptest::prelude::*;

use c4net::autograd::gradcheck::{check, GradcheckOptions};
use c4net::{Tape, Tensor};

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// A leaf read by several consumers receives the sum of their gradients.
    #[test]
    fn fan_out_accumulates(x in values(12)) {
        let mut tape = Tape::new();
        let v = tape.param(Tensor::new(&[2, 3, 2, 1], x.clone()).unwrap());
        let sq = tape.mul(v, v).unwrap();
        let tri = tape.scale(v, 3.0);
        let a = tape.add(sq, tri).unwrap();
        let b = tape.add(a, v).unwrap();
        let loss = tape.sum(b);
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(v).unwrap();
        for (gi, xi) in g.iter().zip(&x) {
            prop_assert!((gi - (2.0 * xi + 4.0)).abs() <= 1e-12);
        }
    }

    /// Broadcast operands collect gradient from every position they cover.
    #[test]
    fn broadcast_gradient_sums_fan_out(x in values(24), b in values(3)) {
        let mut tape = Tape::new();
        let xv = tape.param(Tensor::new(&[2, 3, 2, 2], x.clone()).unwrap());
        let bv = tape.param(Tensor::new(&[1, 3, 1, 1], b).unwrap());
        let y = tape.mul(xv, bv).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        let gb = grads.get(bv).unwrap();
        for c in 0..3 {
            let want: f64 = (0..2).flat_map(|n| (0..4).map(move |k| (n * 3 + c) * 4 + k)).map(|i| x[i]).sum();
            prop_assert!((gb[c] - want).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_is_deterministic(x in values(2 * 2 * 5 * 5), w in values(3 * 2 * 9)) {
        let run = || {
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::new(&[2, 2, 5, 5], x.clone()).unwrap());
            let wv = tape.constant(Tensor::new(&[3, 2, 3, 3], w.clone()).unwrap());
            let y = tape.conv2d(xv, wv, None, 1, 1).unwrap();
            let y = tape.sigmoid(y);
            tape.value(y).clone()
        };
        prop_assert_eq!(run(), run());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn smooth_ops_match_finite_differences(x in prop::collection::vec(0.1f64..2.0, 12), y in values(12)) {
        let inputs = [Tensor::new(&[1, 3, 2, 2], x).unwrap(), Tensor::new(&[1, 3, 2, 2], y).unwrap()];
        let probes = check(&inputs, GradcheckOptions::default(), |t, v| {
            let l = t.log(v[0]);
            let s = t.sigmoid(v[1]);
            let m = t.mul(l, s)?;
            let d = t.div(m, v[0])?;
            Ok(t.sum(d))
        })
        .unwrap();
        for p in probes {
            prop_assert!(p.passes(1e-4), "{} error {:e}", p.name, p.max_rel_error);
        }
    }
}
