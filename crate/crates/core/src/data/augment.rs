use std::ops::Range;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixupDomain {
    Waveform,
    #[default]
    LogMel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixupConfig {
    /// Both shape parameters of the Beta distribution λ is drawn from.
    pub alpha: f64,
    pub domain: MixupDomain,
}

impl Default for MixupConfig {
    fn default() -> Self {
        MixupConfig {
            alpha: 1.0,
            domain: MixupDomain::LogMel,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid(format!("mixup alpha must be > 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// One λ per pair.
    pub fn draw_lambdas<R: Rng + ?Sized>(&self, pairs: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.validate()?;
        let beta = Beta::new(self.alpha, self.alpha).map_err(|e| invalid(format!("mixup beta: {e}")))?;
        Ok((0..pairs).map(|_| beta.sample(rng)).collect())
    }
}

/// Mixes consecutive rows pairwise: output row `i` is
/// `λᵢ·row(2i) + (1 − λᵢ)·row(2i+1)`. The complementary weight is formed
/// in `f32` so the two weights sum to exactly one.
pub fn mix_pairs(rows: &[f32], batch: usize, lambdas: &[f64]) -> Result<Vec<f32>> {
    if !batch.is_multiple_of(2) {
        return Err(invalid(format!("mixup needs an even batch, got {batch}")));
    }
    if batch == 0 || !rows.len().is_multiple_of(batch) {
        return Err(shape(format!("{} values do not split into {batch} rows", rows.len())));
    }
    if lambdas.len() != batch / 2 {
        return Err(shape(format!("{} lambdas for {} pairs", lambdas.len(), batch / 2)));
    }
    let d = rows.len() / batch;
    let mut out = Vec::with_capacity(rows.len() / 2);
    for (p, &lam) in lambdas.iter().enumerate() {
        let w1 = lam as f32;
        let w2 = 1.0 - w1;
        let a = &rows[2 * p * d..(2 * p + 1) * d];
        let b = &rows[(2 * p + 1) * d..(2 * p + 2) * d];
        out.extend(a.iter().zip(b).map(|(&x1, &x2)| w1 * x1 + w2 * x2));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixupOutput {
    pub x: Vec<f32>,
    pub y: Vec<f32>,
    pub lambdas: Vec<f64>,
}

/// Mixup of a batch of `batch` inputs (`x`, row-major) and targets (`y`).
/// Returns `batch / 2` mixed items.
pub fn mixup<R: Rng + ?Sized>(x: &[f32], y: &[f32], batch: usize, cfg: &MixupConfig, rng: &mut R) -> Result<MixupOutput> {
    if !batch.is_multiple_of(2) {
        return Err(invalid(format!("mixup needs an even batch, got {batch}")));
    }
    let lambdas = cfg.draw_lambdas(batch / 2, rng)?;
    let x = mix_pairs(x, batch, &lambdas)?;
    let y = mix_pairs(y, batch, &lambdas)?;
    Ok(MixupOutput { x, y, lambdas })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecAugmentConfig {
    /// Largest frequency-mask width `f′` in bins.
    pub freq_mask_param: usize,
    pub n_freq_masks: usize,
    /// Largest time-mask width `t′` in frames.
    pub time_mask_param: usize,
    pub n_time_masks: usize,
}

impl Default for SpecAugmentConfig {
    fn default() -> Self {
        SpecAugmentConfig {
            freq_mask_param: 8,
            n_freq_masks: 2,
            time_mask_param: 64,
            n_time_masks: 2,
        }
    }
}

/// Masks applied by one [`spec_augment`] call.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskRecord {
    pub freq: Vec<Range<usize>>,
    pub time: Vec<Range<usize>>,
    pub fill: f32,
}

impl MaskRecord {
    /// Fraction of the `n_bins` frequency bins covered by the union of masks.
    pub fn freq_fraction(&self, n_bins: usize) -> f64 {
        union_len(&self.freq, n_bins) as f64 / n_bins as f64
    }

    pub fn time_fraction(&self, n_frames: usize) -> f64 {
        union_len(&self.time, n_frames) as f64 / n_frames as f64
    }

    pub fn is_masked(&self, t: usize, f: usize) -> bool {
        self.freq.iter().any(|r| r.contains(&f)) || self.time.iter().any(|r| r.contains(&t))
    }
}

fn union_len(ranges: &[Range<usize>], n: usize) -> usize {
    let mut hit = vec![false; n];
    for r in ranges {
        hit[r.clone()].iter_mut().for_each(|h| *h = true);
    }
    hit.iter().filter(|&&h| h).count()
}

/// Frequency and time masking of a row-major `frames × bins` log-mel
/// matrix, in place. Widths are drawn from `U{0..=param}` and starts from
/// `U{0..=len − width}`; masked cells take the matrix minimum. A time mask
/// parameter longer than the clip is clamped to the clip.
pub fn spec_augment<R: Rng + ?Sized>(
    logmel: &mut [f32],
    frames: usize,
    bins: usize,
    cfg: &SpecAugmentConfig,
    rng: &mut R,
) -> Result<MaskRecord> {
    if logmel.len() != frames * bins || frames == 0 || bins == 0 {
        return Err(shape(format!("{} values for a {frames}×{bins} log-mel", logmel.len())));
    }
    if cfg.freq_mask_param > bins {
        return Err(invalid(format!(
            "frequency mask parameter {} exceeds {bins} bins",
            cfg.freq_mask_param
        )));
    }
    let fill = logmel.iter().copied().fold(f32::INFINITY, f32::min);
    let draw = |param: usize, len: usize, rng: &mut R| {
        let w = rng.random_range(0..=param.min(len));
        let start = rng.random_range(0..=len - w);
        start..start + w
    };
    let freq: Vec<_> = (0..cfg.n_freq_masks).map(|_| draw(cfg.freq_mask_param, bins, rng)).collect();
    let time: Vec<_> = (0..cfg.n_time_masks).map(|_| draw(cfg.time_mask_param, frames, rng)).collect();
    for row in logmel.chunks_mut(bins) {
        for r in &freq {
            row[r.clone()].iter_mut().for_each(|v| *v = fill);
        }
    }
    for r in &time {
        logmel[r.start * bins..r.end * bins].iter_mut().for_each(|v| *v = fill);
    }
    Ok(MaskRecord { freq, time, fill })
}
