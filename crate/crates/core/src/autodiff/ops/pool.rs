use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{shape, Result};
use crate::real::Real;

impl<T: Real> Tape<T> {
    /// Non-overlapping average pooling on `[B, C, H, W]`. Trailing rows or
    /// columns that do not fill a window are dropped.
    pub fn avg_pool2d(&mut self, x: Var, size: [usize; 2]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(shape(format!("avg_pool2d wants [B, C, H, W], got {xs:?}")));
        }
        let [ph, pw] = size;
        let (h, w) = (xs[2], xs[3]);
        let (oh, ow) = (h / ph.max(1), w / pw.max(1));
        if ph == 0 || pw == 0 || oh == 0 || ow == 0 {
            return Err(shape(format!("avg_pool2d {size:?} does not fit {h}x{w}")));
        }
        let planes = xs[0] * xs[1];
        let norm = T::one() / T::from_usize(ph * pw).unwrap();
        let xd = self.value(x).data();
        let mut out = vec![T::zero(); planes * oh * ow];
        for p in 0..planes {
            let src = &xd[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = T::zero();
                    for dy in 0..ph {
                        let row = (oy * ph + dy) * w + ox * pw;
                        s += src[row..row + pw].iter().copied().sum::<T>();
                    }
                    dst[oy * ow + ox] = s * norm;
                }
            }
        }
        let out = Tensor::new(vec![xs[0], xs[1], oh, ow], out)?;
        Ok(self.push("avg_pool2d", out, &[x], move |ctx| {
            let mut dx = vec![T::zero(); planes * h * w];
            for p in 0..planes {
                let g = &ctx.grad[p * oh * ow..(p + 1) * oh * ow];
                let d = &mut dx[p * h * w..(p + 1) * h * w];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let v = g[oy * ow + ox] * norm;
                        for dy in 0..ph {
                            let row = (oy * ph + dy) * w + ox * pw;
                            d[row..row + pw].iter_mut().for_each(|z| *z = v);
                        }
                    }
                }
            }
            vec![Some(dx)]
        }))
    }

    /// Non-overlapping max pooling on `[B, C, L]`; the trailing remainder is dropped.
    pub fn max_pool1d(&mut self, x: Var, size: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(shape(format!("max_pool1d wants [B, C, L], got {xs:?}")));
        }
        let l = xs[2];
        if size == 0 || l / size == 0 {
            return Err(shape(format!("max_pool1d size {size} does not fit length {l}")));
        }
        let ol = l / size;
        let rows = xs[0] * xs[1];
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(rows * ol);
        let mut arg = Vec::with_capacity(rows * ol);
        for r in 0..rows {
            for o in 0..ol {
                let start = r * l + o * size;
                let (mut bi, mut bv) = (start, xd[start]);
                for (i, &v) in xd[start..start + size].iter().enumerate() {
                    if v > bv {
                        bi = start + i;
                        bv = v;
                    }
                }
                out.push(bv);
                arg.push(bi);
            }
        }
        let n_in = rows * l;
        let out = Tensor::new(vec![xs[0], xs[1], ol], out)?;
        Ok(self.push("max_pool1d", out, &[x], move |ctx| {
            let mut dx = vec![T::zero(); n_in];
            for (g, &i) in ctx.grad.iter().zip(&arg) {
                dx[i] += *g;
            }
            vec![Some(dx)]
        }))
    }

    /// `[B, C, ...] -> [B, C]`: mean over all trailing positions plus max
    /// over the same positions.
    pub fn global_pool(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 3 {
            return Err(shape(format!("global_pool wants [B, C, ...], got {xs:?}")));
        }
        let sp: usize = xs[2..].iter().product();
        if sp == 0 {
            return Err(shape("global_pool over an empty map"));
        }
        let rows = xs[0] * xs[1];
        let n = T::from_usize(sp).unwrap();
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(rows);
        let mut arg = Vec::with_capacity(rows);
        for r in 0..rows {
            let cells = &xd[r * sp..(r + 1) * sp];
            let mean = cells.iter().copied().sum::<T>() / n;
            let (mut bi, mut bv) = (0, cells[0]);
            for (i, &v) in cells.iter().enumerate() {
                if v > bv {
                    bi = i;
                    bv = v;
                }
            }
            out.push(mean + bv);
            arg.push(bi);
        }
        let out = Tensor::new(vec![xs[0], xs[1]], out)?;
        Ok(self.push("global_pool", out, &[x], move |ctx| {
            let mut dx = vec![T::zero(); rows * sp];
            for r in 0..rows {
                let g = ctx.grad[r];
                let share = g / n;
                dx[r * sp..(r + 1) * sp].iter_mut().for_each(|z| *z = share);
                dx[r * sp + arg[r]] += g;
            }
            vec![Some(dx)]
        }))
    }
}
