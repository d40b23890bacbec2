//! Sequential vs rayon timings of the data-parallel hot paths.
//!
//! Build with `--no-default-features` to confirm that `Parallel` falls back
//! to the sequential loops.

use std::hint::black_box;

use audiotag::arch::{build_cnn, CnnDepth, CnnOptions, Model};
use audiotag::autodiff::{ConvParams, Tape, Tensor};
use audiotag::data::{toy_dataset, ToyConfig};
use audiotag::train::evaluate;
use audiotag::Execution;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn random(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn conv2d(c: &mut Criterion) {
    let x = random(&[8, 16, 100, 32], 1);
    let w = random(&[32, 16, 3, 3], 2);
    let mut g = c.benchmark_group("conv2d_forward_backward");
    g.sample_size(10);
    for (label, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                let mut tape = Tape::with_execution(exec);
                let xv = tape.leaf(x.clone(), true);
                let wv = tape.leaf(w.clone(), true);
                let y = tape.conv2d(xv, wv, None, ConvParams::same([3, 3])).unwrap();
                let loss = tape.sum(y);
                tape.backward(loss).unwrap();
                black_box(tape.grad(wv).map(|g| g[0]))
            })
        });
    }
    g.finish();
}

fn conv1d(c: &mut Criterion) {
    let x = random(&[8, 8, 6400], 3);
    let w = random(&[16, 8, 3], 4);
    let mut g = c.benchmark_group("conv1d_dilated_forward_backward");
    g.sample_size(10);
    for (label, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| {
                let mut tape = Tape::with_execution(exec);
                let xv = tape.leaf(x.clone(), true);
                let wv = tape.leaf(w.clone(), true);
                let y = tape.conv1d(xv, wv, None, 1, 2, 2).unwrap();
                let loss = tape.sum(y);
                tape.backward(loss).unwrap();
                black_box(tape.grad(xv).map(|g| g[0]))
            })
        });
    }
    g.finish();
}

fn small_model() -> Model<f32> {
    let spec = build_cnn(
        CnnDepth::Cnn6,
        &CnnOptions {
            n_classes: 4,
            width_scale: 0.125,
            ..CnnOptions::default()
        },
    )
    .unwrap();
    Model::new(spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
}

fn logmel_batch(c: &mut Criterion) {
    let model = small_model();
    let w = random(&[16, 32_000], 5);
    let mut g = c.benchmark_group("logmel_batch_16x1s");
    g.sample_size(10);
    for (label, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| black_box(model.logmel_batch(&w, exec).unwrap()))
        });
    }
    g.finish();
}

fn evaluation(c: &mut Criterion) {
    let model = small_model();
    let set = toy_dataset(&ToyConfig {
        n_clips: 32,
        ..ToyConfig::default()
    })
    .unwrap();
    let mut g = c.benchmark_group("evaluate_32_clips");
    g.sample_size(10);
    for (label, exec) in MODES {
        g.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| black_box(evaluate(&model, &set, 16, exec).unwrap().0.macro_avg.map))
        });
    }
    g.finish();
}

criterion_group!(benches, conv2d, conv1d, logmel_batch, evaluation);
criterion_main!(benches);
