use super::split_axis;
use crate::autodiff::{Mode, Tape, Tensor, Var};
use crate::error::{shape, Error, Result};
use crate::real::Real;

/// Running statistics of a batch-norm layer. The affine `gamma`/`beta` live
/// with the other trainable parameters and are passed to the op as [`Var`]s.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// `new = (1 − m)·old + m·batch`.
    pub momentum: T,
    pub eps: T,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        BatchNormState {
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::lit(0.1),
            eps: T::lit(1e-5),
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// Folds one batch's statistics into the running estimates.
    pub fn update(&mut self, stats: &BatchStats<T>) {
        let m = self.momentum;
        for c in 0..self.channels() {
            self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * stats.mean[c];
            self.running_var[c] = (T::one() - m) * self.running_var[c] + m * stats.unbiased_var[c];
        }
    }
}

/// Per-channel statistics of one train-mode batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    pub unbiased_var: Vec<T>,
}

impl<T: Real> Tape<T> {
    /// Batch normalization over channel `axis` of `x`.
    ///
    /// Train mode normalizes by the biased batch variance and returns the
    /// batch statistics for the caller to fold into `state`; eval mode uses
    /// the running statistics.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        axis: usize,
        state: &BatchNormState<T>,
        mode: Mode,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(shape(format!("batch_norm axis {axis} out of range for {xs:?}")));
        }
        let (outer, ch, inner) = split_axis(&xs, axis);
        if self.shape(gamma) != [ch] || self.shape(beta) != [ch] || state.channels() != ch {
            return Err(shape(format!(
                "batch_norm over {ch} channels got gamma {:?}, beta {:?}, state {}",
                self.shape(gamma),
                self.shape(beta),
                state.channels()
            )));
        }
        let count = outer * inner;
        let eps = state.eps;
        let xd = self.value(x).data();
        let gd = self.value(gamma).data().to_vec();
        let bd = self.value(beta).data().to_vec();
        let at = move |o: usize, c: usize, i: usize| (o * ch + c) * inner + i;

        let (mean, var, stats) = match mode {
            Mode::Train => {
                if count < 2 {
                    return Err(Error::DegenerateBatch(format!(
                        "batch_norm needs >= 2 values per channel in train mode, got {count}"
                    )));
                }
                let n = T::from_usize(count).unwrap();
                let mut mean = vec![T::zero(); ch];
                let mut var = vec![T::zero(); ch];
                for c in 0..ch {
                    let mut s = T::zero();
                    for o in 0..outer {
                        let base = at(o, c, 0);
                        s += xd[base..base + inner].iter().copied().sum::<T>();
                    }
                    let mu = s / n;
                    let mut v = T::zero();
                    for o in 0..outer {
                        let base = at(o, c, 0);
                        v += xd[base..base + inner].iter().map(|&z| (z - mu) * (z - mu)).sum::<T>();
                    }
                    mean[c] = mu;
                    var[c] = v / n;
                }
                let unbiased = var
                    .iter()
                    .map(|&v| v * n / (n - T::one()))
                    .collect();
                let stats = BatchStats {
                    mean: mean.clone(),
                    unbiased_var: unbiased,
                };
                (mean, var, Some(stats))
            }
            Mode::Eval => (state.running_mean.clone(), state.running_var.clone(), None),
        };

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        for o in 0..outer {
            for c in 0..ch {
                let base = at(o, c, 0);
                for i in base..base + inner {
                    let h = (xd[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    out[i] = gd[c] * h + bd[c];
                }
            }
        }
        let out = Tensor::new(xs, out)?;
        let train = mode == Mode::Train;
        let var = self.push("batch_norm", out, &[x, gamma, beta], move |ctx| {
            let g = ctx.grad;
            let mut dgamma = vec![T::zero(); ch];
            let mut dbeta = vec![T::zero(); ch];
            for o in 0..outer {
                for c in 0..ch {
                    let base = at(o, c, 0);
                    for i in base..base + inner {
                        dgamma[c] += g[i] * xhat[i];
                        dbeta[c] += g[i];
                    }
                }
            }
            let dx = ctx.needs[0].then(|| {
                let mut dx = vec![T::zero(); g.len()];
                let n = T::from_usize(count).unwrap();
                for o in 0..outer {
                    for c in 0..ch {
                        let base = at(o, c, 0);
                        let k = gd[c] * inv_std[c];
                        for i in base..base + inner {
                            dx[i] = if train {
                                k * (g[i] - dbeta[c] / n - xhat[i] * dgamma[c] / n)
                            } else {
                                k * g[i]
                            };
                        }
                    }
                }
                dx
            });
            vec![dx, Some(dgamma), Some(dbeta)]
        });
        Ok((var, stats))
    }
}
