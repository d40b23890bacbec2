use super::basic::softmax_row;
use crate::autodiff::{Tape, Tensor, Var, BCE_EPS};
use crate::error::{invalid, shape, Result};
use crate::real::Real;

fn check_target<T: Real>(pred: &[usize], target: &Tensor<T>, op: &str) -> Result<()> {
    if pred.len() != 2 || target.shape() != pred {
        return Err(shape(format!("{op}: prediction {pred:?} vs target {:?}", target.shape())));
    }
    if let Some(v) = target.data().iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
        return Err(invalid(format!("{op}: target value {v} outside [0, 1]")));
    }
    Ok(())
}

impl<T: Real> Tape<T> {
    /// Binary cross-entropy summed over classes and averaged over the batch.
    ///
    /// Predictions are clamped to `[eps, 1 − eps]` before the log; the
    /// gradient is evaluated at the clamped value. Fractional (mixup) targets
    /// are accepted.
    pub fn bce_loss(&mut self, pred: Var, target: &Tensor<T>) -> Result<Var> {
        let ps = self.shape(pred).to_vec();
        check_target(&ps, target, "bce_loss")?;
        let batch = T::from_usize(ps[0]).unwrap();
        let eps = T::lit(BCE_EPS);
        let hi = T::one() - eps;
        // `max`/`min` would swallow NaN, which must reach the loss
        let clamped: Vec<T> = self
            .value(pred)
            .data()
            .iter()
            .map(|&p| if p.is_nan() { p } else { p.max(eps).min(hi) })
            .collect();
        let y = target.data().to_vec();
        let total: T = clamped
            .iter()
            .zip(&y)
            .map(|(p, t)| -(*t * p.ln() + (T::one() - *t) * (T::one() - *p).ln()))
            .sum();
        let out = Tensor::scalar(total / batch);
        Ok(self.push("bce_loss", out, &[pred], move |ctx| {
            let g0 = ctx.grad[0] / batch;
            vec![Some(
                clamped
                    .iter()
                    .zip(&y)
                    .map(|(p, t)| g0 * -(*t / *p - (T::one() - *t) / (T::one() - *p)))
                    .collect(),
            )]
        }))
    }

    /// Softmax cross-entropy on raw logits, averaged over the batch.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &Tensor<T>) -> Result<Var> {
        let ls = self.shape(logits).to_vec();
        check_target(&ls, target, "softmax_cross_entropy")?;
        let (batch, k) = (ls[0], ls[1]);
        let mut probs = self.value(logits).data().to_vec();
        for row in probs.chunks_mut(k) {
            softmax_row(row);
        }
        let y = target.data().to_vec();
        let eps = T::lit(BCE_EPS);
        let total: T = probs.iter().zip(&y).map(|(p, t)| -*t * p.max(eps).ln()).sum();
        let nb = T::from_usize(batch).unwrap();
        let out = Tensor::scalar(total / nb);
        Ok(self.push("softmax_cross_entropy", out, &[logits], move |ctx| {
            let g0 = ctx.grad[0] / nb;
            let mut g = vec![T::zero(); probs.len()];
            for ((gr, pr), yr) in g.chunks_mut(k).zip(probs.chunks(k)).zip(y.chunks(k)) {
                let mass: T = yr.iter().copied().sum();
                for ((d, p), t) in gr.iter_mut().zip(pr).zip(yr) {
                    *d = g0 * (*p * mass - *t);
                }
            }
            vec![Some(g)]
        }))
    }
}
