//! Synthetic single-label clips: band-limited tones and noises.
//!
//! Class `k` is one of eight sound kinds (four tones, four noise bands).
//! Each clip holds its sound over a random stretch covering at least half
//! the clip, at a random level, over faint white noise.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ClipSet;
use crate::error::{invalid, Result};
use crate::par::{map_range, Execution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToyConfig {
    pub n_clips: usize,
    pub n_classes: usize,
    pub sample_rate: u32,
    pub duration_secs: f64,
    pub seed: u64,
    /// Target index for sound kind `k` is `label_map[k]`; identity when empty.
    pub label_map: Vec<usize>,
}

impl Default for ToyConfig {
    fn default() -> Self {
        ToyConfig {
            n_clips: 100,
            n_classes: 4,
            sample_rate: 32_000,
            duration_secs: 1.0,
            seed: 0,
            label_map: Vec::new(),
        }
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Tone(f64, f64),
    Noise(f64, f64),
}

const KINDS: [Kind; 8] = [
    Kind::Tone(400.0, 600.0),
    Kind::Noise(1_000.0, 2_000.0),
    Kind::Tone(2_800.0, 3_400.0),
    Kind::Noise(6_000.0, 9_000.0),
    Kind::Tone(9_500.0, 10_500.0),
    Kind::Noise(200.0, 350.0),
    Kind::Tone(1_300.0, 1_500.0),
    Kind::Noise(11_000.0, 13_000.0),
];

pub const MAX_CLASSES: usize = KINDS.len();

/// Generates a balanced toy set (clip `i` has sound kind `i mod n_classes`).
pub fn toy_dataset(cfg: &ToyConfig) -> Result<ClipSet> {
    if cfg.n_classes == 0 || cfg.n_classes > MAX_CLASSES {
        return Err(invalid(format!("toy dataset supports 1..={MAX_CLASSES} classes")));
    }
    if cfg.n_clips == 0 || cfg.duration_secs <= 0.0 {
        return Err(invalid("toy dataset needs clips of positive duration"));
    }
    let map: Vec<usize> = if cfg.label_map.is_empty() {
        (0..cfg.n_classes).collect()
    } else {
        let mut sorted = cfg.label_map.clone();
        sorted.sort();
        if sorted != (0..cfg.n_classes).collect::<Vec<_>>() {
            return Err(invalid("label_map must be a permutation of the classes"));
        }
        cfg.label_map.clone()
    };
    let len = (cfg.sample_rate as f64 * cfg.duration_secs).round() as usize;
    let sr = cfg.sample_rate as f64;
    let waves = map_range(Execution::default(), cfg.n_clips, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        synth(KINDS[i % cfg.n_classes], len, sr, &mut rng)
    });
    let targets = (0..cfg.n_clips)
        .map(|i| {
            let mut t = vec![0.0; cfg.n_classes];
            t[map[i % cfg.n_classes]] = 1.0;
            t
        })
        .collect();
    ClipSet::new(
        cfg.sample_rate,
        (0..cfg.n_clips).map(|i| format!("toy{i:05}")).collect(),
        waves,
        targets,
    )
}

fn synth(kind: Kind, len: usize, sr: f64, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let nyq = sr / 2.0 * 0.95;
    let partials: Vec<(f64, f64)> = match kind {
        Kind::Tone(lo, hi) => vec![(rng.random_range(lo..hi).min(nyq), rng.random_range(0.0..TAU))],
        Kind::Noise(lo, hi) => (0..32)
            .map(|_| (rng.random_range(lo..hi).min(nyq), rng.random_range(0.0..TAU)))
            .collect(),
    };
    let norm = 1.0 / (partials.len() as f64).sqrt();
    let level = rng.random_range(0.1..0.5);
    let span = rng.random_range(len / 2..=len);
    let onset = rng.random_range(0..=len - span);
    (0..len)
        .map(|n| {
            let floor = rng.random_range(-0.005..0.005);
            if n < onset || n >= onset + span {
                return floor as f32;
            }
            let t = n as f64 / sr;
            let s: f64 = partials.iter().map(|&(f, ph)| (TAU * f * t + ph).sin()).sum();
            (floor + level * norm * s) as f32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_deterministic() {
        let cfg = ToyConfig {
            n_clips: 8,
            duration_secs: 0.1,
            ..ToyConfig::default()
        };
        let a = toy_dataset(&cfg).unwrap();
        let b = toy_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.clip_samples(), 3_200);
        for k in 0..4 {
            assert_eq!(a.targets.iter().filter(|t| t[k] == 1.0).count(), 2);
        }
        assert!(a.waveforms.iter().flatten().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn label_map_permutes_targets() {
        let cfg = ToyConfig {
            n_clips: 4,
            duration_secs: 0.05,
            label_map: vec![3, 2, 1, 0],
            ..ToyConfig::default()
        };
        let a = toy_dataset(&cfg).unwrap();
        assert_eq!(a.targets[0], vec![0.0, 0.0, 0.0, 1.0]);
        let bad = ToyConfig {
            label_map: vec![0, 0, 1, 2],
            ..cfg
        };
        assert!(toy_dataset(&bad).is_err());
    }
}
