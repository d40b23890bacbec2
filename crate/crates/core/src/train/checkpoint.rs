//! Model checkpoints.
//!
//! ```text
//! "ATCK" | version: u32 LE | header_len: u64 LE | header (JSON) | payload
//! ```
//!
//! The header echoes the architecture spec, the iteration counter and a
//! manifest of `(name, dtype, shape, offset, len)` entries addressing
//! little-endian `f32` data in the payload. Entries are contiguous and
//! non-overlapping. Adam moments are stored as `optim.m.<param>` and
//! `optim.v.<param>` tensors with their step counts in the header.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchSpec, Model, Section};
use crate::autodiff::{AdamState, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"ATCK";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
    /// Byte length.
    len: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    arch: ArchSpec,
    iteration: u64,
    #[serde(default)]
    frozen: Vec<Section>,
    #[serde(default)]
    optimizer_steps: Vec<(String, u64)>,
    tensors: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchSpec,
    pub iteration: u64,
    pub frozen: Vec<Section>,
    /// Parameters and buffers in store order, then optimizer moments.
    pub tensors: Vec<NamedTensor>,
    pub optimizer_steps: Vec<(String, u64)>,
}

const OPTIM_M: &str = "optim.m.";
const OPTIM_V: &str = "optim.v.";

impl Checkpoint {
    pub fn from_model(model: &Model<f32>, iteration: u64) -> Self {
        Checkpoint {
            arch: model.spec.clone(),
            iteration,
            frozen: model.frozen_sections(),
            tensors: model
                .params
                .entries()
                .iter()
                .map(|e| NamedTensor {
                    name: e.name.clone(),
                    tensor: e.tensor.clone(),
                })
                .collect(),
            optimizer_steps: Vec::new(),
        }
    }

    /// Appends Adam moments keyed by parameter name.
    pub fn with_optimizer(mut self, states: &[(String, AdamState<f32>)]) -> Self {
        for (name, st) in states {
            let shape = [st.m.len()];
            self.tensors.push(NamedTensor {
                name: format!("{OPTIM_M}{name}"),
                tensor: Tensor::new(shape.to_vec(), st.m.clone()).expect("1-d moment"),
            });
            self.tensors.push(NamedTensor {
                name: format!("{OPTIM_V}{name}"),
                tensor: Tensor::new(shape.to_vec(), st.v.clone()).expect("1-d moment"),
            });
            self.optimizer_steps.push((name.clone(), st.step));
        }
        self
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|t| t.name == name).map(|t| &t.tensor)
    }

    /// Model tensors only (no optimizer state).
    pub fn model_tensors(&self) -> impl Iterator<Item = &NamedTensor> {
        self.tensors.iter().filter(|t| !t.name.starts_with("optim."))
    }

    pub fn optimizer_states(&self) -> Result<Vec<(String, AdamState<f32>)>> {
        self.optimizer_steps
            .iter()
            .map(|(name, step)| {
                let get = |p: &str| {
                    self.get(&format!("{p}{name}"))
                        .map(|t| t.data().to_vec())
                        .ok_or_else(|| Error::CorruptManifest(format!("optimizer moments for {name} missing")))
                };
                Ok((
                    name.clone(),
                    AdamState {
                        m: get(OPTIM_M)?,
                        v: get(OPTIM_V)?,
                        step: *step,
                    },
                ))
            })
            .collect()
    }

    /// Copies every parameter and buffer into `model`, whose spec must equal
    /// the checkpoint's.
    pub fn load_into(&self, model: &mut Model<f32>) -> Result<()> {
        if model.spec != self.arch {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint is for {} (width {}), model is {} (width {})",
                self.arch.name, self.arch.width_scale, model.spec.name, model.spec.width_scale
            )));
        }
        let names: Vec<String> = model.params.names().map(str::to_string).collect();
        for name in &names {
            let t = self
                .get(name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("checkpoint lacks {name}")))?;
            model.params.set(name, t.clone())?;
        }
        if let Some(extra) = self.model_tensors().find(|t| model.params.position(&t.name).is_none()) {
            return Err(Error::CheckpointMismatch(format!("unexpected tensor {}", extra.name)));
        }
        Ok(())
    }

    /// Rebuilds the model described by the checkpoint.
    pub fn to_model(&self) -> Result<Model<f32>> {
        let mut model = Model::new(self.arch.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        self.load_into(&mut model)?;
        model.set_frozen(&self.frozen);
        Ok(model)
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let tensors = self
            .tensors
            .iter()
            .map(|t| {
                let len = 4 * t.tensor.numel() as u64;
                let e = ManifestEntry {
                    name: t.name.clone(),
                    dtype: "f32".into(),
                    shape: t.tensor.shape().to_vec(),
                    offset,
                    len,
                };
                offset += len;
                e
            })
            .collect();
        let header = Header {
            arch: self.arch.clone(),
            iteration: self.iteration,
            frozen: self.frozen.clone(),
            optimizer_steps: self.optimizer_steps.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in &self.tensors {
            for v in t.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let truncated = |what: String| Error::TruncatedPayload(what);
        if bytes.len() < 4 {
            return Err(truncated(format!("{} bytes, no magic", bytes.len())));
        }
        let found: [u8; 4] = bytes[..4].try_into().unwrap();
        if found != MAGIC {
            return Err(Error::BadMagic { expected: MAGIC, found });
        }
        if bytes.len() < 16 {
            return Err(truncated(format!("{} bytes, header incomplete", bytes.len())));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                supported: VERSION,
            });
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let hend = 16u64
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| truncated(format!("header of {hlen} bytes exceeds file of {}", bytes.len())))?
            as usize;
        let header: Header = serde_json::from_slice(&bytes[16..hend])
            .map_err(|e| Error::CorruptManifest(format!("header does not parse: {e}")))?;
        let payload = &bytes[hend..];

        let mut expected = 0u64;
        let mut seen = std::collections::HashSet::new();
        for e in &header.tensors {
            if e.dtype != "f32" {
                return Err(Error::CorruptManifest(format!("{}: unsupported dtype {}", e.name, e.dtype)));
            }
            if !seen.insert(e.name.as_str()) {
                return Err(Error::CorruptManifest(format!("duplicate tensor {}", e.name)));
            }
            let numel = e.shape.iter().try_fold(1u64, |a, &d| a.checked_mul(d as u64));
            if numel.and_then(|n| n.checked_mul(4)) != Some(e.len) {
                return Err(Error::CorruptManifest(format!("{}: shape {:?} vs {} bytes", e.name, e.shape, e.len)));
            }
            if e.offset != expected {
                return Err(Error::CorruptManifest(format!(
                    "{}: offset {} overlaps or leaves a gap (expected {expected})",
                    e.name, e.offset
                )));
            }
            expected += e.len;
        }
        if (payload.len() as u64) < expected {
            return Err(truncated(format!("{} of {expected} payload bytes", payload.len())));
        }
        if payload.len() as u64 > expected {
            return Err(Error::CorruptManifest(format!(
                "{} bytes beyond the last manifest entry",
                payload.len() as u64 - expected
            )));
        }
        let tensors = header
            .tensors
            .iter()
            .map(|e| {
                let raw = &payload[e.offset as usize..(e.offset + e.len) as usize];
                let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                Ok(NamedTensor {
                    name: e.name.clone(),
                    tensor: Tensor::new(e.shape.clone(), data)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Checkpoint {
            arch: header.arch,
            iteration: header.iteration,
            frozen: header.frozen,
            tensors,
            optimizer_steps: header.optimizer_steps,
        })
    }

    /// Writes to a sibling temp file first, then renames over `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.encode()?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_cnn, CnnDepth, CnnOptions};

    fn small_model(width: f64, seed: u64) -> Model<f32> {
        let spec = build_cnn(
            CnnDepth::Cnn6,
            &CnnOptions {
                n_classes: 3,
                width_scale: width,
                ..CnnOptions::default()
            },
        )
        .unwrap();
        Model::new(spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn roundtrip_with_optimizer() {
        let m = small_model(0.0625, 1);
        let st = AdamState {
            m: vec![0.5, -1.0],
            v: vec![2.0, f32::MIN_POSITIVE],
            step: 12,
        };
        let c = Checkpoint::from_model(&m, 42).with_optimizer(&[("head.fc_out.bias".into(), st.clone())]);
        let back = Checkpoint::decode(&c.encode().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.optimizer_states().unwrap()[0].1, st);
        let m2 = back.to_model().unwrap();
        assert_eq!(m2.params, m.params);
    }

    #[test]
    fn rejects_other_architecture() {
        let c = Checkpoint::from_model(&small_model(0.0625, 1), 0);
        let mut other = small_model(0.125, 1);
        assert!(matches!(c.load_into(&mut other), Err(Error::CheckpointMismatch(_))));
    }

    #[test]
    fn corrupt_files() {
        let bytes = Checkpoint::from_model(&small_model(0.0625, 2), 0).encode().unwrap();
        let mut magic = bytes.clone();
        magic[1] = b'?';
        assert!(matches!(Checkpoint::decode(&magic), Err(Error::BadMagic { .. })));
        let mut ver = bytes.clone();
        ver[4] = 2;
        assert!(matches!(Checkpoint::decode(&ver), Err(Error::VersionMismatch { found: 2, .. })));
        assert!(matches!(
            Checkpoint::decode(&bytes[..bytes.len() - 3]),
            Err(Error::TruncatedPayload(_))
        ));
        let mut garbled = bytes.clone();
        garbled[20] = b'#';
        assert!(matches!(Checkpoint::decode(&garbled), Err(Error::CorruptManifest(_))));
    }
}
