use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::{ArchSpec, Section};
use crate::autodiff::Tensor;
use crate::error::{invalid, Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Trainable,
    /// Non-trainable state such as batch-norm running statistics.
    Buffer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor<T>,
}

/// Named tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, kind: ParamKind, tensor: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(invalid(format!("duplicate parameter {name}")));
        }
        let i = self.entries.len();
        self.index.insert(name.clone(), i);
        self.entries.push(ParamEntry { name, kind, tensor });
        Ok(i)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.entries[i].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.position(name).map(move |i| &mut self.entries[i].tensor)
    }

    pub fn entry(&self, i: usize) -> &ParamEntry<T> {
        &self.entries[i]
    }

    pub fn entry_mut(&mut self, i: usize) -> &mut ParamEntry<T> {
        &mut self.entries[i]
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Total scalars in trainable tensors.
    pub fn trainable_count(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.kind == ParamKind::Trainable)
            .map(|e| e.tensor.numel() as u64)
            .sum()
    }

    /// Replaces a tensor, keeping its name and kind. Shapes must agree.
    pub fn set(&mut self, name: &str, tensor: Tensor<T>) -> Result<()> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::CheckpointMismatch(format!("unknown parameter {name}")))?;
        let e = &mut self.entries[i];
        if e.tensor.shape() != tensor.shape() {
            return Err(Error::CheckpointMismatch(format!(
                "{name}: shape {:?} does not match {:?}",
                tensor.shape(),
                e.tensor.shape()
            )));
        }
        e.tensor = tensor;
        Ok(())
    }

    /// Removes every entry whose name starts with `prefix`.
    pub fn remove_prefix(&mut self, prefix: &str) {
        self.entries.retain(|e| !e.name.starts_with(prefix));
        self.index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.name.clone(), i))
            .collect();
    }
}

/// `U(−a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn xavier_uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-a..a)))
}

pub(crate) fn param_name(section: Section, layer: &str, what: &str) -> String {
    format!("{}.{layer}.{what}", section.prefix())
}

/// Allocates and initializes every tensor named by `spec`.
pub(crate) fn init_params<T: Real, R: Rng + ?Sized>(spec: &ArchSpec, rng: &mut R) -> Result<ParamStore<T>> {
    use super::spec::LayerSpec as L;
    let prop = spec.propagate(spec.frontend.sample_rate as usize * 10)?;
    let mut store = ParamStore::new();
    for info in &prop.layers {
        let Some(name) = info.name.as_deref() else { continue };
        let section = info.section;
        let layer = spec
            .section(section)
            .and_then(|ls| ls.iter().find(|l| l.name() == Some(name)))
            .expect("propagated layer exists in spec");
        let n = |what: &str| param_name(section, name, what);
        match layer {
            L::Conv2d { out_channels, kernel, bias, .. } => {
                let cin = info.in_shape[0];
                let k = kernel[0] * kernel[1];
                let shape = [*out_channels, cin, kernel[0], kernel[1]];
                store.insert(n("weight"), ParamKind::Trainable, xavier_uniform(&shape, cin * k, out_channels * k, rng))?;
                if *bias {
                    store.insert(n("bias"), ParamKind::Trainable, Tensor::zeros(&[*out_channels]))?;
                }
            }
            L::Conv1d { out_channels, kernel, bias, .. } => {
                let cin = info.in_shape[0];
                let shape = [*out_channels, cin, *kernel];
                store.insert(n("weight"), ParamKind::Trainable, xavier_uniform(&shape, cin * kernel, out_channels * kernel, rng))?;
                if *bias {
                    store.insert(n("bias"), ParamKind::Trainable, Tensor::zeros(&[*out_channels]))?;
                }
            }
            L::BatchNorm { .. } | L::FreqBatchNorm { .. } => {
                let c = if matches!(layer, L::BatchNorm { .. }) {
                    info.in_shape[0]
                } else {
                    *info.in_shape.last().unwrap()
                };
                store.insert(n("gamma"), ParamKind::Trainable, Tensor::full(&[c], T::one()))?;
                store.insert(n("beta"), ParamKind::Trainable, Tensor::zeros(&[c]))?;
                store.insert(n("running_mean"), ParamKind::Buffer, Tensor::zeros(&[c]))?;
                store.insert(n("running_var"), ParamKind::Buffer, Tensor::full(&[c], T::one()))?;
            }
            L::Linear { out_features, bias, .. } => {
                let din = info.in_shape[0];
                store.insert(n("weight"), ParamKind::Trainable, xavier_uniform(&[*out_features, din], din, *out_features, rng))?;
                if *bias {
                    store.insert(n("bias"), ParamKind::Trainable, Tensor::zeros(&[*out_features]))?;
                }
            }
            _ => {}
        }
    }
    Ok(store)
}
