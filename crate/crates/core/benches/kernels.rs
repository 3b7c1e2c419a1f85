//! Rayon vs sequential paths for the hot kernels and a full training step.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use c4net::autograd::kernels::{conv2d_backward_input, conv2d_backward_weight, conv2d_forward, ConvGeom};
use c4net::harness::config::RunConfig;
use c4net::harness::data::{batch, generate_dataset};
use c4net::harness::train::compute_gradients;
use c4net::metrics::{evaluate, MaskPair};
use c4net::model::Net;
use c4net::parallel::set_parallel;

const PATHS: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn conv(c: &mut Criterion) {
    let g = ConvGeom { n: 8, cin: 16, h: 32, w: 32, cout: 16, k: 3, stride: 1, pad: 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = random(g.n * g.cin * g.h * g.w, &mut rng);
    let w = random(g.cout * g.cin * g.k * g.k, &mut rng);
    let b = random(g.cout, &mut rng);
    let dy = random(g.n * g.cout * g.out_h() * g.out_w(), &mut rng);
    let mut group = c.benchmark_group("conv3x3_8x16x32x32");
    for (name, on) in PATHS {
        set_parallel(on);
        group.bench_function(BenchmarkId::new("forward", name), |bch| bch.iter(|| conv2d_forward(black_box(&x), &w, Some(&b), &g)));
        group.bench_function(BenchmarkId::new("backward_input", name), |bch| bch.iter(|| conv2d_backward_input(black_box(&dy), &w, &g)));
        group.bench_function(BenchmarkId::new("backward_weight", name), |bch| bch.iter(|| conv2d_backward_weight(black_box(&dy), &x, &g)));
    }
    group.finish();
    set_parallel(true);
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<MaskPair> = (0..64)
        .map(|i| {
            let pred = (0..64 * 64).map(|_| rng.gen()).collect();
            let gt = (0..64 * 64).map(|_| rng.gen_bool(0.3)).collect();
            MaskPair::new(format!("m{}", i), 64, 64, pred, gt).unwrap()
        })
        .collect();
    let mut group = c.benchmark_group("evaluate_64x64x64");
    for (name, on) in PATHS {
        set_parallel(on);
        group.bench_function(name, |bch| bch.iter(|| evaluate(black_box(&pairs)).unwrap()));
    }
    group.finish();
    set_parallel(true);
}

fn train_step(c: &mut Criterion) {
    let cfg = RunConfig::default();
    let samples = generate_dataset(8, cfg.model.input_size, 2).unwrap();
    let (images, masks) = batch(&samples).unwrap();
    let mut group = c.benchmark_group("train_step_batch8_64x64");
    group.sample_size(10);
    for (name, on) in PATHS {
        set_parallel(on);
        let mut net = Net::<f32>::new(&cfg.model, 0).unwrap();
        group.bench_function(name, |bch| bch.iter(|| compute_gradients(&mut net, black_box(&images), &masks, &cfg.loss).unwrap()));
    }
    group.finish();
    set_parallel(true);
}

criterion_group!(benches, conv, metrics, train_step);
criterion_main!(benches);
