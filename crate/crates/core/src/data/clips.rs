use super::ClipRecord;
use crate::autodiff::Tensor;
use crate::dsp::{pad_or_truncate, read_wav, resample_linear};
use crate::error::{shape, Error, Result};
use crate::par::{map_range, Execution};

/// Fixed-length clips and their targets held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipSet {
    pub sample_rate: u32,
    pub ids: Vec<String>,
    pub waveforms: Vec<Vec<f32>>,
    pub targets: Vec<Vec<f32>>,
}

impl ClipSet {
    pub fn new(sample_rate: u32, ids: Vec<String>, waveforms: Vec<Vec<f32>>, targets: Vec<Vec<f32>>) -> Result<Self> {
        if ids.len() != waveforms.len() || ids.len() != targets.len() {
            return Err(shape(format!(
                "{} ids, {} waveforms, {} targets",
                ids.len(),
                waveforms.len(),
                targets.len()
            )));
        }
        if ids.is_empty() {
            return Err(Error::Data("empty clip set".into()));
        }
        let (l, k) = (waveforms[0].len(), targets[0].len());
        if waveforms.iter().any(|w| w.len() != l) || targets.iter().any(|t| t.len() != k) {
            return Err(shape("clips must share one length and one class count"));
        }
        Ok(ClipSet {
            sample_rate,
            ids,
            waveforms,
            targets,
        })
    }

    /// Reads, resamples and pads/truncates every referenced WAV file.
    pub fn load(records: &[ClipRecord], sample_rate: u32, clip_samples: usize, exec: Execution) -> Result<Self> {
        let waves = map_range(exec, records.len(), |i| -> Result<Vec<f32>> {
            let r = &records[i];
            let w = read_wav(&r.audio_ref).map_err(|e| Error::Data(format!("{}: {e}", r.audio_ref.display())))?;
            let w = resample_linear(&w, sample_rate)?;
            Ok(pad_or_truncate(&w, clip_samples).samples)
        });
        Self::new(
            sample_rate,
            records.iter().map(|r| r.clip_id.clone()).collect(),
            waves.into_iter().collect::<Result<_>>()?,
            records.iter().map(|r| r.target.clone()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn clip_samples(&self) -> usize {
        self.waveforms[0].len()
    }

    pub fn n_classes(&self) -> usize {
        self.targets[0].len()
    }

    /// `([B, L] waveforms, [B, K] targets)` for the given clip indices.
    pub fn batch(&self, idx: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
        let (l, k) = (self.clip_samples(), self.n_classes());
        let mut w = Vec::with_capacity(idx.len() * l);
        let mut t = Vec::with_capacity(idx.len() * k);
        for &i in idx {
            w.extend_from_slice(&self.waveforms[i]);
            t.extend_from_slice(&self.targets[i]);
        }
        (
            Tensor::new(vec![idx.len(), l], w).expect("consistent clip lengths"),
            Tensor::new(vec![idx.len(), k], t).expect("consistent class counts"),
        )
    }

    pub fn subset(&self, idx: &[usize]) -> ClipSet {
        ClipSet {
            sample_rate: self.sample_rate,
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
            waveforms: idx.iter().map(|&i| self.waveforms[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{write_wav, Waveform};

    #[test]
    fn load_resamples_and_pads() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_wav(&p, &Waveform::new(vec![0.25; 8000], 16_000).unwrap()).unwrap();
        let rec = ClipRecord {
            clip_id: "a".into(),
            audio_ref: p,
            target: vec![0.0, 1.0],
        };
        let set = ClipSet::load(&[rec], 32_000, 32_000, Execution::default()).unwrap();
        assert_eq!(set.clip_samples(), 32_000);
        assert!((set.waveforms[0][100] - 0.25).abs() < 1e-3);
        assert_eq!(set.waveforms[0][31_999], 0.0);
        let (w, t) = set.batch(&[0, 0]);
        assert_eq!(w.shape(), &[2, 32_000]);
        assert_eq!(t.data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_file_is_data_error() {
        let rec = ClipRecord {
            clip_id: "a".into(),
            audio_ref: "/nonexistent/a.wav".into(),
            target: vec![1.0],
        };
        assert!(matches!(
            ClipSet::load(&[rec], 32_000, 100, Execution::Sequential),
            Err(Error::Data(_))
        ));
    }
}
