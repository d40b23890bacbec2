//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the code under test except to build the graph
//! being differentiated (`gradcheck`) or to fetch the value being compared
//! (`compare`).
#![allow(dead_code)]

pub mod compare;
pub mod gradcheck;

use std::f64::consts::PI;

/// `|Σ x[n] e^{-2πikn/N}|²` for `k = 0..=N/2`, by direct summation.
pub fn naive_dft_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, &x) in frame.iter().enumerate() {
                let a = -2.0 * PI * (k * t % n) as f64 / n as f64;
                re += x * a.cos();
                im += x * a.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Periodic Hamming window, `0.54 − 0.46·cos(2πn/N)`.
pub fn periodic_hamming(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Reflect-padded (no edge repeat), Hamming-windowed power frames by naive DFT.
pub fn naive_stft_power(signal: &[f64], window: usize, hop: usize) -> Vec<Vec<f64>> {
    let pad = window / 2;
    let len = signal.len() as isize;
    let at = |i: isize| -> f64 {
        let mut j = i;
        // mirror until inside; fine for pads shorter than the signal
        while j < 0 || j >= len {
            j = if j < 0 { -j } else { 2 * (len - 1) - j };
        }
        signal[j as usize]
    };
    let padded: Vec<f64> = (-(pad as isize)..len + pad as isize).map(at).collect();
    let w = periodic_hamming(window);
    let frames = 1 + (padded.len() - window) / hop;
    (0..frames)
        .map(|f| {
            let frame: Vec<f64> = (0..window).map(|i| padded[f * hop + i] * w[i]).collect();
            naive_dft_power(&frame)
        })
        .collect()
}

/// Order position (0-based) of every item under "score descending, input
/// index ascending", computed by pairwise counting rather than sorting.
fn pairwise_ranks(scores: &[f64]) -> Vec<usize> {
    (0..scores.len())
        .map(|i| {
            (0..scores.len())
                .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
                .count()
        })
        .collect()
}

/// Non-interpolated AP from its definition: mean over positives of the
/// precision at that positive's rank.
pub fn brute_ap(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let ranks = pairwise_ranks(scores);
    let pos: Vec<usize> = (0..scores.len()).filter(|&i| labels[i]).collect();
    if pos.is_empty() {
        return None;
    }
    let total: f64 = pos
        .iter()
        .map(|&i| {
            let hits = pos.iter().filter(|&&j| ranks[j] <= ranks[i]).count();
            hits as f64 / (ranks[i] + 1) as f64
        })
        .sum();
    Some(total / pos.len() as f64)
}

/// Fraction of (positive, negative) pairs ordered correctly, ties 1/2.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut good, mut pairs) = (0.0, 0usize);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    good += 1.0;
                } else if scores[i] == scores[j] {
                    good += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| good / pairs as f64)
}

/// Standard normal CDF through libm's erfc.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Φ⁻¹ by bisection to machine precision.
pub fn bisect_inverse_normal(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Relative difference `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
