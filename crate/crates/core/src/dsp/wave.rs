use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Mono PCM samples (nominally within [-1, 1]) at a given rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    /// Validating constructor: rate must be positive and samples finite.
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(invalid("sample_rate must be > 0"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("waveform sample {i}")));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Linear-interpolation resampler.
///
/// Output length is `round(len · target / source)`. Output sample `i` sits at
/// source position `i · source / target`; positions past the last sample hold
/// the last value. Lossy for content above the coarser rate's Nyquist/2.
pub fn resample_linear(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(invalid("target_rate must be > 0"));
    }
    if w.samples.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let src = w.sample_rate as f64;
    let dst = target_rate as f64;
    let out_len = ((w.samples.len() as f64) * dst / src).round() as usize;
    let last = w.samples.len() - 1;
    let ratio = src / dst;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let lo = pos.floor() as usize;
            if lo >= last {
                return w.samples[last];
            }
            let frac = pos - lo as f64;
            let a = w.samples[lo] as f64;
            let b = w.samples[lo + 1] as f64;
            (a + (b - a) * frac) as f32
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: target_rate,
    })
}

/// Zero-pads at the tail or truncates to exactly `target_len` samples.
pub fn pad_or_truncate(w: &Waveform, target_len: usize) -> Waveform {
    let mut samples = w.samples.clone();
    samples.resize(target_len, 0.0);
    Waveform {
        samples,
        sample_rate: w.sample_rate,
    }
}

/// Reads a RIFF PCM file (16-bit integer or 32-bit float). Multi-channel
/// input is averaged down to mono; 16-bit values are divided by 32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Data("wav has zero channels".into()));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Data(format!(
                "unsupported wav encoding {fmt:?} {bits}-bit (need 16-bit int or 32-bit float)"
            )))
        }
    };
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Writes mono 16-bit PCM (samples clipped to [-1, 1)).
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
    for &s in &w.samples {
        let v = (s as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}
