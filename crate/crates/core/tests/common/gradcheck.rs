//! Central finite-difference checks for the differentiable kernels.
//!
//! Every graph is reduced to a scalar by a fixed random projection
//! `Σ out ⊙ R`, so each output element contributes a distinct weight.

use audiotag::autodiff::{BatchNormState, ConvParams, Mode, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const SHAPES_PER_KERNEL: usize = 6;

type Graph = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Var>;

/// A graph together with the inputs it is differentiated against.
pub struct Case {
    pub label: String,
    pub inputs: Vec<Tensor<f64>>,
    pub graph: Graph,
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

fn eval(case: &Case, inputs: &[Tensor<f64>], want_grad: bool) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), want_grad)).collect();
    let out = (case.graph)(&mut tape, &vars);
    let value = tape.value(out).data()[0];
    if !want_grad {
        return (value, Vec::new());
    }
    tape.backward(out).expect("backward");
    let grads = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).map_or(vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();
    (value, grads)
}

/// Largest norm-wise relative error `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖)` over the
/// inputs of `case`.
pub fn max_rel_error(case: &Case) -> f64 {
    let (_, analytic) = eval(case, &case.inputs, true);
    let mut worst = 0.0f64;
    for (k, input) in case.inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for i in 0..input.numel() {
            let mut shifted = case.inputs.clone();
            shifted[k].data_mut()[i] += STEP;
            let (up, _) = eval(case, &shifted, false);
            shifted[k].data_mut()[i] -= 2.0 * STEP;
            let (down, _) = eval(case, &shifted, false);
            numeric[i] = (up - down) / (2.0 * STEP);
        }
        let diff: f64 = numeric.iter().zip(&analytic[k]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na: f64 = analytic[k].iter().map(|v| v * v).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = na.max(nn);
        let err = if scale < 1e-12 { diff } else { diff / scale };
        worst = worst.max(err);
    }
    worst
}

/// `Σ out ⊙ R` with a projection drawn from `seed`.
fn project(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.shape(out).to_vec();
    let r = tape.constant(random(&mut rng, &shape, -1.0, 1.0));
    let m = tape.mul(out, r).unwrap();
    tape.sum(m)
}

pub const KERNELS: &[&str] = &[
    "conv1d",
    "conv2d",
    "batch_norm",
    "avg_pool2d",
    "max_pool1d",
    "global_pool",
    "linear",
    "sigmoid",
    "bce_loss",
    "relu",
    "softmax_cross_entropy",
    "concat_narrow_transpose",
];

/// Random cases for one kernel; shapes vary with `i`.
pub fn cases(kernel: &str, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..SHAPES_PER_KERNEL).map(|i| make_case(kernel, i, &mut rng)).collect()
}

fn make_case(kernel: &str, i: usize, rng: &mut ChaCha8Rng) -> Case {
    let ps = rng.random::<u64>();
    match kernel {
        "conv1d" => {
            let (b, cin, cout) = (rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4));
            let k = rng.random_range(1..5);
            let (stride, dilation, padding) = (1 + i % 3, 1 + (i / 2) % 3, rng.random_range(0..4));
            let len = (k - 1) * dilation + 1 + rng.random_range(2..10);
            let bias = i.is_multiple_of(2);
            let mut inputs = vec![random(rng, &[b, cin, len], -1.0, 1.0), random(rng, &[cout, cin, k], -1.0, 1.0)];
            if bias {
                inputs.push(random(rng, &[cout], -0.5, 0.5));
            }
            Case {
                label: format!("x[{b},{cin},{len}] w[{cout},{cin},{k}] s{stride} p{padding} d{dilation} bias={bias}"),
                inputs,
                graph: Box::new(move |t, v| {
                    let y = t.conv1d(v[0], v[1], v.get(2).copied(), stride, padding, dilation).unwrap();
                    project(t, y, ps)
                }),
            }
        }
        "conv2d" => {
            let (b, cin, cout) = (rng.random_range(1..3), rng.random_range(1..3), rng.random_range(1..4));
            let (kh, kw) = (rng.random_range(1..4), rng.random_range(1..4));
            let p = ConvParams {
                stride: [1 + i % 2, 1 + (i / 2) % 2],
                padding: [rng.random_range(0..2), rng.random_range(0..2)],
                dilation: [1 + (i / 3) % 2, 1],
            };
            let h = (kh - 1) * p.dilation[0] + 1 + rng.random_range(1..5);
            let w = kw + rng.random_range(1..5);
            let bias = i % 2 == 1;
            let mut inputs = vec![random(rng, &[b, cin, h, w], -1.0, 1.0), random(rng, &[cout, cin, kh, kw], -1.0, 1.0)];
            if bias {
                inputs.push(random(rng, &[cout], -0.5, 0.5));
            }
            Case {
                label: format!("x[{b},{cin},{h},{w}] w[{cout},{cin},{kh},{kw}] {p:?} bias={bias}"),
                inputs,
                graph: Box::new(move |t, v| {
                    let y = t.conv2d(v[0], v[1], v.get(2).copied(), p).unwrap();
                    project(t, y, ps)
                }),
            }
        }
        "batch_norm" => {
            let shape = vec![rng.random_range(2..4), rng.random_range(1..4), rng.random_range(1..4), rng.random_range(2..4)];
            // alternate channel axis 1 and the last axis (mel-bin normalization)
            let axis = if i.is_multiple_of(2) { 1 } else { 3 };
            let c = shape[axis];
            Case {
                label: format!("x{shape:?} axis {axis} train"),
                inputs: vec![
                    random(rng, &shape, -2.0, 2.0),
                    random(rng, &[c], 0.5, 1.5),
                    random(rng, &[c], -0.5, 0.5),
                ],
                graph: Box::new(move |t, v| {
                    let st = BatchNormState::new(c);
                    let (y, _) = t.batch_norm(v[0], v[1], v[2], axis, &st, Mode::Train).unwrap();
                    project(t, y, ps)
                }),
            }
        }
        "avg_pool2d" => {
            let size = [1 + i % 2, 1 + (i / 2) % 3];
            let shape = [rng.random_range(1..3), rng.random_range(1..3), size[0] * 2 + i % 2, size[1] * 2 + 1];
            Case {
                label: format!("x{shape:?} size {size:?}"),
                inputs: vec![random(rng, &shape, -1.0, 1.0)],
                graph: Box::new(move |t, v| {
                    let y = t.avg_pool2d(v[0], size).unwrap();
                    project(t, y, ps)
                }),
            }
        }
        "max_pool1d" => {
            let size = 1 + i % 4;
            let shape = [rng.random_range(1..3), rng.random_range(1..3), size * 3 + i % 3];
            Case {
                label: format!("x{shape:?} size {size}"),
                inputs: vec![random(rng, &shape, -1.0, 1.0)],
                graph: Box::new(move |t, v| {
                    let y = t.max_pool1d(v[0], size).unwrap();
                    project(t, y, ps)
                }),
            }
        }
        "global_pool" => {
            let mut shape = vec![rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..5)];
            if i.is_multiple_of(2) {
                shape.push(rng.random_range(1..4));
            }
            Case {
                label: format!("x{shape:?}"),
                inputs: vec![random(rng, &shape, -1.0, 1.0)],
                graph: Box::new(move |t, v| {
                    let y = t.global_pool(v[0]).unwrap();
                    project(t, y, ps)
                }),
            }
        }
        "linear" => {
            let (b, din, dout) = (rng.random_range(1..4), rng.random_range(1..6), rng.random_range(1..6));
            let bias = i.is_multiple_of(2);
            let mut inputs = vec![random(rng, &[b, din], -1.0, 1.0), random(rng, &[dout, din], -1.0, 1.0)];
            if bias {
                inputs.push(random(rng, &[dout], -1.0, 1.0));
            }
            Case {
                label: format!("x[{b},{din}] w[{dout},{din}] bias={bias}"),
                inputs,
                graph: Box::new(move |t, v| {
                    let y = t.linear(v[0], v[1], v.get(2).copied()).unwrap();
                    project(t, y, ps)
                }),
            }
        }
        "sigmoid" => {
            let shape = [rng.random_range(1..4), rng.random_range(1..6)];
            Case {
                label: format!("x{shape:?}"),
                inputs: vec![random(rng, &shape, -4.0, 4.0)],
                graph: Box::new(move |t, v| {
                    let y = t.sigmoid(v[0]);
                    project(t, y, ps)
                }),
            }
        }
        "bce_loss" => {
            let shape = [rng.random_range(1..5), rng.random_range(1..6)];
            // fractional targets as produced by mixup
            let target = random(rng, &shape, 0.0, 1.0);
            Case {
                label: format!("p{shape:?}"),
                inputs: vec![random(rng, &shape, 0.05, 0.95)],
                graph: Box::new(move |t, v| t.bce_loss(v[0], &target).unwrap()),
            }
        }
        "relu" => {
            let shape = [rng.random_range(1..4), rng.random_range(1..8)];
            Case {
                label: format!("x{shape:?}"),
                inputs: vec![random(rng, &shape, -1.0, 1.0)],
                graph: Box::new(move |t, v| {
                    let y = t.relu(v[0]);
                    project(t, y, ps)
                }),
            }
        }
        "softmax_cross_entropy" => {
            let (b, k) = (rng.random_range(1..4), rng.random_range(2..6));
            let target = Tensor::from_fn(&[b, k], |j| if j % k == (j / k) % k { 1.0 } else { 0.0 });
            Case {
                label: format!("logits[{b},{k}]"),
                inputs: vec![random(rng, &[b, k], -3.0, 3.0)],
                graph: Box::new(move |t, v| t.softmax_cross_entropy(v[0], &target).unwrap()),
            }
        }
        "concat_narrow_transpose" => {
            let (b, c1, c2, n, m) = (
                rng.random_range(1..3),
                rng.random_range(1..3),
                rng.random_range(1..3),
                rng.random_range(2..5),
                rng.random_range(1..4),
            );
            Case {
                label: format!("a[{b},{c1},{n},{m}] b[{b},{c2},{n},{m}]"),
                inputs: vec![random(rng, &[b, c1, n, m], -1.0, 1.0), random(rng, &[b, c2, n, m], -1.0, 1.0)],
                graph: Box::new(move |t, v| {
                    let c = t.concat(&[v[0], v[1]], 1).unwrap();
                    let tr = t.transpose_last2(c).unwrap();
                    let cut = t.narrow(tr, 3, 1, n - 1).unwrap();
                    project(t, cut, ps)
                }),
            }
        }
        other => panic!("no gradient case for {other}"),
    }
}
