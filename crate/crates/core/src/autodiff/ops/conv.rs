use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{shape, Result};
use crate::par::{self, Execution};
use crate::real::Real;

/// Stride / zero-padding / dilation per spatial axis (`[height, width]`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvParams {
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub dilation: [usize; 2],
}

impl ConvParams {
    /// Stride 1, "same" padding for an odd kernel.
    pub fn same(kernel: [usize; 2]) -> Self {
        ConvParams {
            stride: [1, 1],
            padding: [kernel[0] / 2, kernel[1] / 2],
            dilation: [1, 1],
        }
    }

    pub fn one_d(stride: usize, padding: usize, dilation: usize) -> Self {
        ConvParams {
            stride: [1, stride],
            padding: [0, padding],
            dilation: [1, dilation],
        }
    }
}

/// Output length of one axis, `None` when the dilated kernel does not fit.
pub fn conv_out_len(len: usize, kernel: usize, stride: usize, padding: usize, dilation: usize) -> Option<usize> {
    let span = dilation * (kernel - 1) + 1;
    let padded = len + 2 * padding;
    if kernel == 0 || stride == 0 || padded < span {
        None
    } else {
        Some((padded - span) / stride + 1)
    }
}

#[derive(Clone, Copy, Debug)]
struct Geom {
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    p: ConvParams,
}

impl Geom {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }
    fn in_len(&self) -> usize {
        self.cin * self.h * self.w
    }
    fn out_sp(&self) -> usize {
        self.oh * self.ow
    }
}

/// Output positions `lo..hi` whose input index `o·stride + off` lands in
/// `0..len`.
fn valid_range(out: usize, len: usize, stride: usize, off: isize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
    let hi = (len as isize - off + s - 1).div_euclid(s).max(0);
    let lo = (lo as usize).min(out);
    (lo, (hi as usize).clamp(lo, out))
}

fn im2col<T: Real>(g: &Geom, x: &[T], col: &mut [T]) {
    let n = g.out_sp();
    let [sh, sw] = g.p.stride;
    let [ph, pw] = g.p.padding;
    let [dh, dw] = g.p.dilation;
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * n..(row + 1) * n];
                let off = (kj * dw) as isize - pw as isize;
                let (lo, hi) = valid_range(g.ow, g.w, sw, off);
                for oy in 0..g.oh {
                    let iy = (oy * sh + ki * dh) as isize - ph as isize;
                    let seg = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        seg.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    seg[..lo].fill(T::zero());
                    seg[hi..].fill(T::zero());
                    if sw == 1 {
                        let a = (lo as isize + off) as usize;
                        seg[lo..hi].copy_from_slice(&src[a..a + hi - lo]);
                    } else {
                        for (ox, d) in (lo..hi).zip(&mut seg[lo..hi]) {
                            *d = src[(ox as isize * sw as isize + off) as usize];
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &Geom, col: &[T], dx: &mut [T]) {
    let n = g.out_sp();
    let [sh, sw] = g.p.stride;
    let [ph, pw] = g.p.padding;
    let [dh, dw] = g.p.dilation;
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &col[row * n..(row + 1) * n];
                let off = (kj * dw) as isize - pw as isize;
                let (lo, hi) = valid_range(g.ow, g.w, sw, off);
                for oy in 0..g.oh {
                    let iy = (oy * sh + ki * dh) as isize - ph as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let seg = &src[oy * g.ow + lo..oy * g.ow + hi];
                    if sw == 1 {
                        let a = (lo as isize + off) as usize;
                        dst[a..a + hi - lo].iter_mut().zip(seg).for_each(|(d, s)| *d += *s);
                    } else {
                        for (ox, s) in (lo..hi).zip(seg) {
                            dst[(ox as isize * sw as isize + off) as usize] += *s;
                        }
                    }
                }
            }
        }
    }
}

fn forward<T: Real>(g: &Geom, batch: usize, x: &[T], w: &[T], bias: Option<&[T]>, exec: Execution) -> Vec<T> {
    let out_item = g.cout * g.out_sp();
    let mut out = vec![T::zero(); batch * out_item];
    par::for_each_chunk_mut(exec, &mut out, out_item, |b, o| {
        let xb = &x[b * g.in_len()..(b + 1) * g.in_len()];
        let mut col = vec![T::zero(); g.k() * g.out_sp()];
        im2col(g, xb, &mut col);
        T::gemm(g.cout, g.k(), g.out_sp(), T::one(), w, false, &col, false, T::zero(), o);
        if let Some(bias) = bias {
            for (co, bv) in bias.iter().enumerate() {
                o[co * g.out_sp()..(co + 1) * g.out_sp()]
                    .iter_mut()
                    .for_each(|v| *v += *bv);
            }
        }
    });
    out
}

struct ConvGrads<T> {
    dx: Option<Vec<T>>,
    dw: Option<Vec<T>>,
    db: Option<Vec<T>>,
}

#[allow(clippy::too_many_arguments)]
fn backward<T: Real>(
    g: &Geom,
    batch: usize,
    x: &[T],
    w: &[T],
    gout: &[T],
    need: [bool; 3],
    exec: Execution,
) -> ConvGrads<T> {
    let out_item = g.cout * g.out_sp();
    let per_item = par::map_range(exec, batch, |b| {
        let gb = &gout[b * out_item..(b + 1) * out_item];
        let dw = need[1].then(|| {
            let mut col = vec![T::zero(); g.k() * g.out_sp()];
            im2col(g, &x[b * g.in_len()..(b + 1) * g.in_len()], &mut col);
            let mut dw = vec![T::zero(); g.cout * g.k()];
            T::gemm(g.cout, g.out_sp(), g.k(), T::one(), gb, false, &col, true, T::zero(), &mut dw);
            dw
        });
        let dx = need[0].then(|| {
            let mut dcol = vec![T::zero(); g.k() * g.out_sp()];
            T::gemm(g.k(), g.cout, g.out_sp(), T::one(), w, true, gb, false, T::zero(), &mut dcol);
            let mut dx = vec![T::zero(); g.in_len()];
            col2im(g, &dcol, &mut dx);
            dx
        });
        (dx, dw)
    });

    let mut dx = need[0].then(|| Vec::with_capacity(batch * g.in_len()));
    let mut dw = need[1].then(|| vec![T::zero(); g.cout * g.k()]);
    for (ix, iw) in per_item {
        if let (Some(acc), Some(v)) = (dx.as_mut(), ix) {
            acc.extend_from_slice(&v);
        }
        if let (Some(acc), Some(v)) = (dw.as_mut(), iw) {
            acc.iter_mut().zip(&v).for_each(|(a, b)| *a += *b);
        }
    }
    let db = need[2].then(|| {
        let mut db = vec![T::zero(); g.cout];
        for b in 0..batch {
            for (co, d) in db.iter_mut().enumerate() {
                let s = b * out_item + co * g.out_sp();
                *d += gout[s..s + g.out_sp()].iter().copied().sum::<T>();
            }
        }
        db
    });
    ConvGrads { dx, dw, db }
}

impl<T: Real> Tape<T> {
    /// 2-D cross-correlation. `x: [B, C_in, H, W]`, `w: [C_out, C_in, kh, kw]`,
    /// optional `bias: [C_out]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, p: ConvParams) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(shape(format!("conv2d wants 4-d input and weight, got {xs:?} / {ws:?}")));
        }
        self.conv_nd(x, w, bias, [xs[0], xs[1], xs[2], xs[3]], [ws[0], ws[1], ws[2], ws[3]], p, "conv2d")
    }

    /// 1-D cross-correlation. `x: [B, C_in, L]`, `w: [C_out, C_in, K]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
        dilation: usize,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 {
            return Err(shape(format!("conv1d wants 3-d input and weight, got {xs:?} / {ws:?}")));
        }
        self.conv_nd(
            x,
            w,
            bias,
            [xs[0], xs[1], 1, xs[2]],
            [ws[0], ws[1], 1, ws[2]],
            ConvParams::one_d(stride, padding, dilation),
            "conv1d",
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_nd(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        xs: [usize; 4],
        ws: [usize; 4],
        p: ConvParams,
        op: &'static str,
    ) -> Result<Var> {
        let [batch, cin, h, wd] = xs;
        let [cout, wcin, kh, kw] = ws;
        if cin != wcin {
            return Err(shape(format!("{op}: input has {cin} channels, weight expects {wcin}")));
        }
        let oh = conv_out_len(h, kh, p.stride[0], p.padding[0], p.dilation[0]);
        let ow = conv_out_len(wd, kw, p.stride[1], p.padding[1], p.dilation[1]);
        let (Some(oh), Some(ow)) = (oh, ow) else {
            return Err(shape(format!("{op}: kernel {kh}x{kw} does not fit input {h}x{wd} with {p:?}")));
        };
        if let Some(b) = bias {
            if self.shape(b) != [cout] {
                return Err(shape(format!("{op}: bias shape {:?}, expected [{cout}]", self.shape(b))));
            }
        }
        let g = Geom { cin, h, w: wd, cout, kh, kw, oh, ow, p };
        let out = forward(
            &g,
            batch,
            self.value(x).data(),
            self.value(w).data(),
            bias.map(|b| self.value(b).data()),
            self.execution(),
        );
        let out_shape = if op == "conv1d" {
            vec![batch, cout, ow]
        } else {
            vec![batch, cout, oh, ow]
        };
        let out = Tensor::new(out_shape, out)?;
        let inputs: Vec<Var> = std::iter::once(x).chain(std::iter::once(w)).chain(bias).collect();
        let has_bias = bias.is_some();
        Ok(self.push(op, out, &inputs, move |ctx| {
            let need = [ctx.needs[0], ctx.needs[1], has_bias && ctx.needs[2]];
            let grads = backward(
                &g,
                batch,
                ctx.inputs[0].data(),
                ctx.inputs[1].data(),
                ctx.grad,
                need,
                ctx.exec,
            );
            let mut v = vec![grads.dx, grads.dw];
            if has_bias {
                v.push(grads.db);
            }
            v
        }))
    }
}
