use serde::{Deserialize, Serialize};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::matrix::Matrix;
use super::wave::Waveform;
use super::window::hamming_window;
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowKind {
    Hamming,
}

/// STFT framing. `window_size` doubles as the FFT length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub window_size: usize,
    pub hop_size: usize,
    pub center: bool,
    pub window_kind: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_size: 1024,
            hop_size: 320,
            center: true,
            window_kind: WindowKind::Hamming,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_size < 2 {
            return Err(invalid("window_size must be >= 2"));
        }
        if self.hop_size == 0 || self.hop_size > self.window_size {
            return Err(invalid(format!(
                "hop_size must be in 1..={}, got {}",
                self.window_size, self.hop_size
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.window_size / 2 + 1
    }

    fn window(&self) -> Result<Vec<f64>> {
        match self.window_kind {
            WindowKind::Hamming => hamming_window(self.window_size, true),
        }
    }
}

/// Frame count for a signal of `len` samples.
pub fn n_frames(len: usize, cfg: &StftConfig) -> Result<usize> {
    cfg.validate()?;
    let padded = if cfg.center {
        let pad = cfg.window_size / 2;
        if len <= pad {
            return Err(invalid(format!(
                "signal of {len} samples too short for reflect padding of {pad}"
            )));
        }
        len + 2 * pad
    } else {
        len
    };
    if padded < cfg.window_size {
        return Err(invalid(format!(
            "window of {} longer than padded signal of {padded}",
            cfg.window_size
        )));
    }
    Ok(1 + (padded - cfg.window_size) / cfg.hop_size)
}

fn reflect_pad(x: &[f32], pad: usize) -> Vec<f64> {
    // numpy "reflect": the edge sample is not repeated
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| x[i] as f64));
    out.extend(x.iter().map(|&v| v as f64));
    out.extend((0..pad).map(|i| x[n - 2 - i] as f64));
    out
}

/// Power spectrogram `|DFT(window ⊙ frame)|²`, shape `T × (window_size/2 + 1)`.
pub fn stft_power(w: &Waveform, cfg: &StftConfig) -> Result<Matrix<f64>> {
    if w.samples.is_empty() {
        return Err(crate::Error::EmptyWaveform);
    }
    let frames = n_frames(w.samples.len(), cfg)?;
    let signal: Vec<f64> = if cfg.center {
        reflect_pad(&w.samples, cfg.window_size / 2)
    } else {
        w.samples.iter().map(|&v| v as f64).collect()
    };
    let window = cfg.window()?;
    let bins = cfg.n_bins();
    let mut out = Matrix::zeros(frames, bins);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.window_size);
    let mut buf = vec![Complex64::default(); cfg.window_size];
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    for t in 0..frames {
        let start = t * cfg.hop_size;
        for (k, slot) in buf.iter_mut().enumerate() {
            *slot = Complex64::new(signal[start + k] * window[k], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (dst, c) in out.row_mut(t).iter_mut().zip(&buf[..bins]) {
            *dst = c.norm_sqr();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_seconds_gives_1001_frames() {
        let w = Waveform::new(vec![0.0; 320_000], 32_000).unwrap();
        assert_eq!(n_frames(320_000, &StftConfig::default()).unwrap(), 1001);
        let p = stft_power(&w, &StftConfig::default()).unwrap();
        assert_eq!(p.shape(), (1001, 513));
        assert!(p.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn reflect_padding_layout() {
        let x = [1.0f32, 2.0, 3.0, 4.0];
        assert_eq!(reflect_pad(&x, 2), vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn too_short_is_error() {
        let w = Waveform::new(vec![0.5; 100], 32_000).unwrap();
        assert!(stft_power(&w, &StftConfig::default()).is_err());
        let cfg = StftConfig {
            center: false,
            ..StftConfig::default()
        };
        assert!(stft_power(&w, &cfg).is_err());
    }

    #[test]
    fn invalid_hop() {
        let cfg = StftConfig {
            hop_size: 2048,
            ..StftConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
