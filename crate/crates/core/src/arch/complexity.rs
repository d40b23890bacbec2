//! Parameter and operation counts derived from shape propagation.
//!
//! Two operation conventions are exposed:
//!
//! * [`mac_count`]: one unit per multiply-accumulate in conv and linear
//!   layers, nothing else.
//! * [`count_multiadds`]: the convention used by the published complexity
//!   tables. Every MAC counts as two operations (one multiply and one add),
//!   biases add one per output, batch norm costs two per input element, and
//!   the STFT is charged as two real-valued 1-D convolutions (real and
//!   imaginary kernels of `window_size` taps producing `window_size/2 + 1`
//!   bins per frame). Activations, pooling, dropout, the mel projection and
//!   the log are free.
//!
//! For CNN14 on a 10 s clip at 32 kHz these give 20.04e9 and 42.22e9.

use serde::Serialize;

use super::spec::{ArchSpec, LayerInfo, Propagation};
use crate::error::Result;

/// Detailed breakdown in the table convention.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Complexity {
    pub samples: usize,
    pub params: u64,
    pub macs: u64,
    pub multiadds: u64,
    pub stft_ops: u64,
    pub conv_ops: u64,
    pub linear_ops: u64,
    pub norm_ops: u64,
}

impl Complexity {
    pub fn of(spec: &ArchSpec, samples: usize) -> Result<Self> {
        let p = spec.propagate(samples)?;
        Ok(Self::from_propagation(spec, &p))
    }

    pub fn from_propagation(spec: &ArchSpec, p: &Propagation) -> Self {
        let mut c = Complexity {
            samples: p.samples,
            params: p.layers.iter().map(|l| l.params).sum(),
            macs: p.layers.iter().map(|l| l.macs).sum(),
            multiadds: 0,
            stft_ops: 0,
            conv_ops: 0,
            linear_ops: 0,
            norm_ops: 0,
        };
        if let Some([frames, _]) = p.logmel_input {
            let n = spec.frontend.window_size as u64;
            c.stft_ops = 2 * frames as u64 * (n / 2 + 1) * n * 2;
        }
        for l in &p.layers {
            let ops = 2 * l.macs + l.bias_ops;
            match l.kind {
                "conv1d" | "conv2d" => c.conv_ops += ops,
                "linear" => c.linear_ops += ops,
                "batch_norm" | "freq_batch_norm" => c.norm_ops += 2 * elems(l),
                _ => {}
            }
        }
        c.multiadds = c.stft_ops + c.conv_ops + c.linear_ops + c.norm_ops;
        c
    }
}

fn elems(l: &LayerInfo) -> u64 {
    l.in_shape.iter().product::<usize>() as u64
}

/// Trainable scalars. Batch-norm running statistics are not counted.
pub fn count_params(spec: &ArchSpec) -> Result<u64> {
    let p = spec.propagate(spec.frontend.sample_rate as usize * 10)?;
    Ok(p.layers.iter().map(|l| l.params).sum())
}

/// Multiply-adds for one clip of `samples` samples, table convention.
pub fn count_multiadds(spec: &ArchSpec, samples: usize) -> Result<u64> {
    Ok(Complexity::of(spec, samples)?.multiadds)
}

/// Plain multiply-accumulate count of conv and linear layers.
pub fn mac_count(spec: &ArchSpec, samples: usize) -> Result<u64> {
    Ok(Complexity::of(spec, samples)?.macs)
}


#[cfg(test)]
mod full_width {
    use super::*;
    use crate::arch::{build_cnn, build_wavegram_logmel_cnn, CnnDepth, CnnOptions, WavegramConfig};

    #[test]
    fn reference_counts() {
        let cnn14 = build_cnn(CnnDepth::Cnn14, &CnnOptions::default()).unwrap();
        let c = Complexity::of(&cnn14, 320_000).unwrap();
        assert_eq!(c.params, 80_753_615);
        assert_eq!(c.stft_ops, 2_103_349_248);
        assert!((c.multiadds as f64 / 42.2196e9 - 1.0).abs() < 1e-4, "{}", c.multiadds);
        assert!((c.macs as f64 / 20.04e9 - 1.0).abs() < 1e-3, "{}", c.macs);
        let cnn6 = build_cnn(CnnDepth::Cnn6, &CnnOptions::default()).unwrap();
        assert_eq!(count_params(&cnn6).unwrap(), 4_837_455);
        let cnn10 = build_cnn(CnnDepth::Cnn10, &CnnOptions::default()).unwrap();
        assert_eq!(count_params(&cnn10).unwrap(), 5_219_279);
        let c6 = Complexity::of(&cnn6, 320_000).unwrap();
        assert!((c6.multiadds as f64 / 21.986e9 - 1.0).abs() < 1e-4, "{}", c6.multiadds);
        let c10 = Complexity::of(&cnn10, 320_000).unwrap();
        assert!((c10.multiadds as f64 / 28.166e9 - 1.0).abs() < 1e-4, "{}", c10.multiadds);
        // Three-channel fusion: only the first conv and the wavegram stack add cost.
        let wl = build_wavegram_logmel_cnn(&WavegramConfig::default(), &cnn14).unwrap();
        let w = Complexity::of(&wl, 320_000).unwrap();
        assert_eq!(w.params, 80_953_487);
        assert_eq!(w.multiadds, 48_778_624_655);
    }
}
