use proptest::prelude::*;

use c4net::{Tape, Tensor};

fn unit(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

fn signed(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dilate_bounds_erode(m in unit(2 * 6 * 7)) {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[1, 2, 6, 7], m.clone()).unwrap());
        let d = tape.dilate(x, 3).unwrap();
        let e = tape.erode(x, 3).unwrap();
        let (d, e) = (tape.value(d).data(), tape.value(e).data());
        for i in 0..m.len() {
            prop_assert!(d[i] >= m[i] && m[i] >= e[i]);
        }
    }

    #[test]
    fn conv_is_linear(x in signed(2 * 5 * 5), y in signed(2 * 5 * 5), w in signed(3 * 2 * 9), a in -2.0f64..2.0, b in -2.0f64..2.0, stride in 1usize..3) {
        let conv = |input: Vec<f64>| {
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::new(&[1, 2, 5, 5], input).unwrap());
            let wv = tape.constant(Tensor::new(&[3, 2, 3, 3], w.clone()).unwrap());
            let out = tape.conv2d(xv, wv, None, stride, 1).unwrap();
            tape.value(out).data().to_vec()
        };
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (fx, fy, fm) = (conv(x), conv(y), conv(mix));
        for i in 0..fm.len() {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-6);
        }
    }

    #[test]
    fn linear_is_linear(x in signed(2 * 6), y in signed(2 * 6), w in signed(4 * 6), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let fc = |input: Vec<f64>| {
            let mut tape = Tape::new();
            let xv = tape.constant(Tensor::new(&[2, 6], input).unwrap());
            let wv = tape.constant(Tensor::new(&[4, 6], w.clone()).unwrap());
            let out = tape.linear(xv, wv, None).unwrap();
            tape.value(out).data().to_vec()
        };
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let (fx, fy, fm) = (fc(x), fc(y), fc(mix));
        for i in 0..fm.len() {
            prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() <= 1e-6);
        }
    }

    #[test]
    fn adaptive_pool_to_own_size_is_identity(h in 1usize..8, w in 1usize..8, seed in any::<u64>()) {
        let data: Vec<f64> = (0..2 * h * w).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 7.0).collect();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[1, 2, h, w], data.clone()).unwrap());
        let y = tape.adaptive_avg_pool(x, h, w).unwrap();
        prop_assert_eq!(tape.value(y).data(), &data[..]);
    }
}
