use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{shape, Result};
use crate::real::Real;

impl<T: Real> Tape<T> {
    /// `x · Wᵀ + b` for `x: [B, D_in]`, `w: [D_out, D_in]`, `b: [D_out]`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(shape(format!("linear: input {xs:?} vs weight {ws:?}")));
        }
        let (batch, din, dout) = (xs[0], xs[1], ws[0]);
        if let Some(b) = bias {
            if self.shape(b) != [dout] {
                return Err(shape(format!("linear: bias {:?}, expected [{dout}]", self.shape(b))));
            }
        }
        let mut out = vec![T::zero(); batch * dout];
        T::gemm(batch, din, dout, T::one(), self.value(x).data(), false, self.value(w).data(), true, T::zero(), &mut out);
        if let Some(b) = bias {
            let bd = self.value(b).data();
            for row in out.chunks_mut(dout) {
                row.iter_mut().zip(bd).for_each(|(o, v)| *o += *v);
            }
        }
        let out = Tensor::new(vec![batch, dout], out)?;
        let inputs: Vec<Var> = [x, w].into_iter().chain(bias).collect();
        let has_bias = bias.is_some();
        Ok(self.push("linear", out, &inputs, move |ctx| {
            let (xd, wd, g) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad);
            let dx = ctx.needs[0].then(|| {
                let mut dx = vec![T::zero(); batch * din];
                T::gemm(batch, dout, din, T::one(), g, false, wd, false, T::zero(), &mut dx);
                dx
            });
            let dw = ctx.needs[1].then(|| {
                let mut dw = vec![T::zero(); dout * din];
                T::gemm(dout, batch, din, T::one(), g, true, xd, false, T::zero(), &mut dw);
                dw
            });
            let mut v = vec![dx, dw];
            if has_bias {
                let mut db = vec![T::zero(); dout];
                for row in g.chunks(dout) {
                    db.iter_mut().zip(row).for_each(|(d, r)| *d += *r);
                }
                v.push(Some(db));
            }
            v
        }))
    }
}
