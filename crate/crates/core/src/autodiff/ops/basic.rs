use rand::Rng;

use super::split_axis;
use crate::autodiff::{Mode, Tape, Tensor, Var};
use crate::error::{invalid, shape, Result};
use crate::real::Real;

impl<T: Real> Tape<T> {
    fn same_shape(&self, a: Var, b: Var, op: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape(format!(
                "{op}: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| *p + *q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push("add", out, &[a, b], |ctx| {
            vec![Some(ctx.grad.to_vec()), Some(ctx.grad.to_vec())]
        }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let (x, y) = (self.value(a), self.value(b));
        let data = x.data().iter().zip(y.data()).map(|(p, q)| *p * *q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push("mul", out, &[a, b], |ctx| {
            let (x, y) = (ctx.inputs[0].data(), ctx.inputs[1].data());
            let gx = ctx.grad.iter().zip(y).map(|(g, v)| *g * *v).collect();
            let gy = ctx.grad.iter().zip(x).map(|(g, v)| *g * *v).collect();
            vec![Some(gx), Some(gy)]
        }))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let x = self.value(a);
        let out = Tensor::from_fn(x.shape(), |i| x.data()[i] * c);
        self.push("scale", out, &[a], move |ctx| {
            vec![Some(ctx.grad.iter().map(|g| *g * c).collect())]
        })
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push("sum", Tensor::scalar(s), &[a], |ctx| {
            vec![Some(vec![ctx.grad[0]; ctx.inputs[0].numel()])]
        })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = T::from_usize(self.value(a).numel()).unwrap();
        let s = self.sum(a);
        self.scale(s, T::one() / n)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::from_fn(x.shape(), |i| x.data()[i].max(T::zero()));
        self.push("relu", out, &[a], |ctx| {
            let x = ctx.inputs[0].data();
            vec![Some(
                ctx.grad
                    .iter()
                    .zip(x)
                    .map(|(g, v)| if *v > T::zero() { *g } else { T::zero() })
                    .collect(),
            )]
        })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let out = Tensor::from_fn(x.shape(), |i| sigmoid(x.data()[i]));
        self.push("sigmoid", out, &[a], |ctx| {
            let y = ctx.output.data();
            vec![Some(
                ctx.grad
                    .iter()
                    .zip(y)
                    .map(|(g, s)| *g * *s * (T::one() - *s))
                    .collect(),
            )]
        })
    }

    /// Row-wise softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let cols = *x.shape().last().ok_or_else(|| shape("softmax of a scalar"))?;
        let mut data = x.data().to_vec();
        for row in data.chunks_mut(cols) {
            softmax_row(row);
        }
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push("softmax", out, &[a], move |ctx| {
            let y = ctx.output.data();
            let mut g = vec![T::zero(); y.len()];
            for ((gr, yr), dr) in ctx.grad.chunks(cols).zip(y.chunks(cols)).zip(g.chunks_mut(cols)) {
                let dot: T = gr.iter().zip(yr).map(|(a, b)| *a * *b).sum();
                for ((d, gi), yi) in dr.iter_mut().zip(gr).zip(yr) {
                    *d = *yi * (*gi - dot);
                }
            }
            vec![Some(g)]
        }))
    }

    /// Inverted dropout: survivors are scaled by `1/(1-p)`. Identity in eval
    /// mode or when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(invalid(format!("dropout p must be in [0, 1), got {p}")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(a);
        }
        let keep = T::lit(1.0 / (1.0 - p));
        let x = self.value(a);
        let mask: Vec<T> = (0..x.numel())
            .map(|_| if rng.random::<f64>() >= p { keep } else { T::zero() })
            .collect();
        let out = Tensor::from_fn(x.shape(), |i| x.data()[i] * mask[i]);
        Ok(self.push("dropout", out, &[a], move |ctx| {
            vec![Some(ctx.grad.iter().zip(&mask).map(|(g, m)| *g * *m).collect())]
        }))
    }

    pub fn reshape(&mut self, a: Var, new_shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(new_shape.to_vec())?;
        Ok(self.push("reshape", out, &[a], |ctx| vec![Some(ctx.grad.to_vec())]))
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let nd = x.ndim();
        if nd < 2 {
            return Err(shape("transpose needs at least 2 dims"));
        }
        let (r, c) = (x.shape()[nd - 2], x.shape()[nd - 1]);
        let mut out_shape = x.shape().to_vec();
        out_shape.swap(nd - 2, nd - 1);
        let out = Tensor::new(out_shape, transpose_blocks(x.data(), r, c))?;
        Ok(self.push("transpose", out, &[a], move |ctx| {
            vec![Some(transpose_blocks(ctx.grad, c, r))]
        }))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = self.shape(*parts.first().ok_or_else(|| invalid("concat of nothing"))?).to_vec();
        if axis >= first.len() {
            return Err(shape(format!("concat axis {axis} out of range for {first:?}")));
        }
        let mut sizes = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != first.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(shape(format!("concat: {s:?} incompatible with {first:?} on axis {axis}")));
            }
            sizes.push(s[axis]);
        }
        let (outer, _, inner) = split_axis(&first, axis);
        let total: usize = sizes.iter().sum();
        let mut out_shape = first.clone();
        out_shape[axis] = total;
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&p, &sz) in parts.iter().zip(&sizes) {
                let src = self.value(p).data();
                data.extend_from_slice(&src[o * sz * inner..(o + 1) * sz * inner]);
            }
        }
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push("concat", out, parts, move |ctx| {
            let mut grads: Vec<Vec<T>> = sizes.iter().map(|&s| Vec::with_capacity(outer * s * inner)).collect();
            let mut off = 0;
            for _ in 0..outer {
                for (g, &sz) in grads.iter_mut().zip(&sizes) {
                    g.extend_from_slice(&ctx.grad[off..off + sz * inner]);
                    off += sz * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn narrow(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if axis >= x.ndim() || start + len > x.shape()[axis] {
            return Err(shape(format!(
                "narrow axis {axis} [{start}, {}) out of range for {:?}",
                start + len,
                x.shape()
            )));
        }
        if start == 0 && len == x.shape()[axis] {
            return Ok(a);
        }
        let (outer, n, inner) = split_axis(x.shape(), axis);
        let mut out_shape = x.shape().to_vec();
        out_shape[axis] = len;
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            data.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let out = Tensor::new(out_shape, data)?;
        Ok(self.push("narrow", out, &[a], move |ctx| {
            let mut g = vec![T::zero(); outer * n * inner];
            for o in 0..outer {
                let base = (o * n + start) * inner;
                g[base..base + len * inner]
                    .copy_from_slice(&ctx.grad[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(g)]
        }))
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_row<T: Real>(row: &mut [T]) {
    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in row.iter_mut() {
        *v /= s;
    }
}

fn transpose_blocks<T: Real>(data: &[T], r: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::zero(); data.len()];
    for (src, dst) in data.chunks(r * c).zip(out.chunks_mut(r * c)) {
        for i in 0..r {
            for j in 0..c {
                dst[j * r + i] = src[i * c + j];
            }
        }
    }
    out
}
