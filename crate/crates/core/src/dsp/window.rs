use crate::error::{invalid, Result};

/// Hamming window `0.54 − 0.46·cos(2πk/D)`, `D = n` (periodic) or `n − 1` (symmetric).
pub fn hamming_window(n: usize, periodic: bool) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(invalid(format!("hamming window needs n >= 2, got {n}")));
    }
    let denom = if periodic { n } else { n - 1 } as f64;
    Ok((0..n)
        .map(|k| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * k as f64 / denom).cos())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_peak() {
        let w = hamming_window(4, true).unwrap();
        assert!((w[0] - 0.08).abs() < 1e-15);
        let w = hamming_window(5, false).unwrap();
        assert!((w[2] - 1.0).abs() < 1e-15);
        assert!((w[0] - w[4]).abs() < 1e-15);
    }

    #[test]
    fn periodic_sum_is_closed_form() {
        // cosine terms cancel over one full period
        let w = hamming_window(1024, true).unwrap();
        let s: f64 = w.iter().sum();
        assert!((s - 552.96).abs() < 1e-9, "{s}");
    }

    #[test]
    fn rejects_tiny() {
        assert!(hamming_window(1, true).is_err());
        assert!(hamming_window(0, false).is_err());
    }
}
