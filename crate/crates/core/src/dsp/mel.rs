use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{invalid, Error, Result};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters (peak 1, not area-normalized) over the one-sided FFT bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelFilterbank {
    pub sample_rate: u32,
    pub window_size: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// `n_mels × (window_size/2 + 1)`.
    pub weights: Matrix<f64>,
    /// Band edges in Hz: `n_mels + 2` points, filter `m` spans `[m, m + 2]` with center `m + 1`.
    pub edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn center_hz(&self, m: usize) -> f64 {
        self.edges_hz[m + 1]
    }
}

pub fn build_mel_filterbank(
    sample_rate: u32,
    window_size: usize,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
) -> Result<MelFilterbank> {
    let nyquist = sample_rate as f64 / 2.0;
    if n_mels == 0 {
        return Err(invalid("n_mels must be > 0"));
    }
    if window_size < 2 {
        return Err(invalid("window_size must be >= 2"));
    }
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(invalid(format!(
            "need 0 <= f_min < f_max <= {nyquist}, got {f_min}..{f_max}"
        )));
    }
    let bins = window_size / 2 + 1;
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    let edges_hz: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = |k: usize| k as f64 * sample_rate as f64 / window_size as f64;

    let mut weights = Matrix::zeros(n_mels, bins);
    for m in 0..n_mels {
        let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
        let row = weights.row_mut(m);
        for (k, w) in row.iter_mut().enumerate() {
            let f = bin_hz(k);
            let rise = (f - left) / (center - left);
            let fall = (right - f) / (right - center);
            *w = rise.min(fall).max(0.0);
        }
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::FilterbankUnderdetermined(format!(
                "mel band {m} ({left:.1}-{right:.1} Hz) contains no FFT bin at {:.2} Hz spacing",
                bin_hz(1)
            )));
        }
    }
    Ok(MelFilterbank {
        sample_rate,
        window_size,
        n_mels,
        f_min,
        f_max,
        weights,
        edges_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape() {
        let fb = build_mel_filterbank(32_000, 1024, 64, 50.0, 14_000.0).unwrap();
        assert_eq!(fb.weights.shape(), (64, 513));
    }

    #[test]
    fn rows_nonnegative_and_unimodal() {
        let fb = build_mel_filterbank(32_000, 1024, 64, 50.0, 14_000.0).unwrap();
        for m in 0..64 {
            let row = fb.weights.row(m);
            assert!(row.iter().all(|&w| w >= 0.0));
            let peak = row
                .iter()
                .enumerate()
                .fold(0, |best, (i, &w)| if w > row[best] { i } else { best });
            assert!(row[..=peak].windows(2).all(|p| p[0] <= p[1]));
            assert!(row[peak..].windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn centers_follow_mel_spacing() {
        let fb = build_mel_filterbank(32_000, 1024, 64, 50.0, 14_000.0).unwrap();
        let (lo, hi) = (hz_to_mel(50.0), hz_to_mel(14_000.0));
        let step = (hi - lo) / 65.0;
        // 1-based filter 32 sits 32 steps above the low edge
        let want = mel_to_hz(lo + 32.0 * step);
        assert!((fb.center_hz(31) - want).abs() < 1e-9);
        let midpoint = mel_to_hz((lo + hi) / 2.0);
        assert!((hz_to_mel(fb.center_hz(31)) - hz_to_mel(midpoint)).abs() <= step);
    }

    #[test]
    fn underdetermined_is_error() {
        let err = build_mel_filterbank(16_000, 64, 128, 0.0, 8_000.0).unwrap_err();
        assert!(err.to_string().contains("filterbank underdetermined"));
    }

    #[test]
    fn bad_cutoffs() {
        assert!(build_mel_filterbank(32_000, 1024, 64, 500.0, 100.0).is_err());
        assert!(build_mel_filterbank(32_000, 1024, 64, 50.0, 20_000.0).is_err());
    }

    #[test]
    fn mel_roundtrip() {
        for f in [0.0, 50.0, 1000.0, 14_000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
    }
}
