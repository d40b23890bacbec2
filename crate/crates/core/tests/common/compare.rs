use audiotag::dsp::{stft_power, StftConfig, Waveform, WindowKind};

use super::{naive_stft_power, rel_err};

pub fn stft_cfg(window: usize, hop: usize) -> StftConfig {
    StftConfig {
        window_size: window,
        hop_size: hop,
        center: true,
        window_kind: WindowKind::Hamming,
    }
}

/// Largest relative deviation from the naive DFT, with a floor of 1e-9 of
/// the frame's peak power so numerically empty bins do not dominate.
pub fn stft_oracle_error(samples: &[f32], window: usize, hop: usize) -> f64 {
    let w = Waveform::new(samples.to_vec(), 16_000).unwrap();
    let fast = stft_power(&w, &stft_cfg(window, hop)).unwrap();
    let signal: Vec<f64> = samples.iter().map(|&v| v as f64).collect();
    let slow = naive_stft_power(&signal, window, hop);
    assert_eq!(fast.rows, slow.len());
    let mut worst = 0.0f64;
    for (t, frame) in slow.iter().enumerate() {
        let peak = frame.iter().copied().fold(0.0, f64::max);
        for (k, &p) in frame.iter().enumerate() {
            worst = worst.max(rel_err(fast.get(t, k), p, peak * 1e-9));
        }
    }
    worst
}
