use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::mel::{build_mel_filterbank, MelFilterbank};
use super::stft::{stft_power, StftConfig, WindowKind};
use super::wave::Waveform;
use crate::error::{invalid, Result};

pub const DEFAULT_AMIN: f64 = 1e-10;

/// `T × F` log-mel energies in dB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogMelSpectrogram {
    pub values: Matrix<f32>,
    pub frame_rate: f64,
}

impl LogMelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.rows
    }

    pub fn n_mels(&self) -> usize {
        self.values.cols
    }
}

/// `10·log10(max(fb · |X|², amin))`, optionally clipped to `max − top_db`.
pub fn logmel_extract(
    w: &Waveform,
    cfg: &StftConfig,
    fb: &MelFilterbank,
    amin: f64,
    top_db: Option<f64>,
) -> Result<LogMelSpectrogram> {
    if fb.window_size != cfg.window_size || fb.sample_rate != w.sample_rate {
        return Err(invalid(format!(
            "filterbank built for {} Hz / window {}, input is {} Hz / window {}",
            fb.sample_rate, fb.window_size, w.sample_rate, cfg.window_size
        )));
    }
    if amin <= 0.0 {
        return Err(invalid("amin must be > 0"));
    }
    let power = stft_power(w, cfg)?;
    let floor_db = 10.0 * amin.log10();
    let mut values = Matrix::zeros(power.rows, fb.n_mels);
    let mut max_db = f64::NEG_INFINITY;
    let mut db = vec![0.0f64; power.rows * fb.n_mels];
    // each triangle touches a narrow band of bins
    let support: Vec<(usize, usize)> = (0..fb.n_mels)
        .map(|m| {
            let row = fb.weights.row(m);
            let lo = row.iter().position(|&v| v != 0.0).unwrap_or(0);
            let hi = row.iter().rposition(|&v| v != 0.0).map_or(lo, |i| i + 1);
            (lo, hi)
        })
        .collect();
    for t in 0..power.rows {
        let spec = power.row(t);
        for (m, &(lo, hi)) in support.iter().enumerate() {
            let e: f64 = fb.weights.row(m)[lo..hi]
                .iter()
                .zip(&spec[lo..hi])
                .map(|(w, p)| w * p)
                .sum();
            let v = if e > amin { 10.0 * e.log10() } else { floor_db };
            max_db = max_db.max(v);
            db[t * fb.n_mels + m] = v;
        }
    }
    if let Some(top) = top_db {
        if top < 0.0 {
            return Err(invalid("top_db must be >= 0"));
        }
        let lo = max_db - top;
        for v in &mut db {
            *v = v.max(lo);
        }
    }
    for (dst, v) in values.data.iter_mut().zip(db) {
        *dst = v as f32;
    }
    Ok(LogMelSpectrogram {
        values,
        frame_rate: w.sample_rate as f64 / cfg.hop_size as f64,
    })
}

/// Front-end hyperparameters as they appear in job configs and arch specs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontEndConfig {
    pub sample_rate: u32,
    pub window_size: usize,
    pub hop_size: usize,
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    #[serde(default = "default_amin")]
    pub amin: f64,
    #[serde(default)]
    pub top_db: Option<f64>,
}

fn default_amin() -> f64 {
    DEFAULT_AMIN
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        FrontEndConfig {
            sample_rate: 32_000,
            window_size: 1024,
            hop_size: 320,
            n_mels: 64,
            f_min: 50.0,
            f_max: 14_000.0,
            amin: DEFAULT_AMIN,
            top_db: None,
        }
    }
}

impl FrontEndConfig {
    pub fn stft(&self) -> StftConfig {
        StftConfig {
            window_size: self.window_size,
            hop_size: self.hop_size,
            center: true,
            window_kind: WindowKind::Hamming,
        }
    }
}

/// A ready-to-use extractor: STFT settings plus a prebuilt filterbank.
/// Immutable after construction; share freely across threads.
#[derive(Clone, Debug)]
pub struct FrontEnd {
    pub config: FrontEndConfig,
    pub stft: StftConfig,
    pub filterbank: MelFilterbank,
}

impl FrontEnd {
    pub fn new(config: FrontEndConfig) -> Result<Self> {
        let stft = config.stft();
        stft.validate()?;
        let filterbank = build_mel_filterbank(
            config.sample_rate,
            config.window_size,
            config.n_mels,
            config.f_min,
            config.f_max,
        )?;
        Ok(FrontEnd {
            config,
            stft,
            filterbank,
        })
    }

    pub fn extract(&self, w: &Waveform) -> Result<LogMelSpectrogram> {
        logmel_extract(w, &self.stft, &self.filterbank, self.config.amin, self.config.top_db)
    }
}
