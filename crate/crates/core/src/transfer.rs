//! Reusing a trained model on a new task.
//!
//! * `Scratch` trains the downstream architecture from random weights.
//! * `FreezeL1` / `FreezeL3` keep the pretrained front end and backbone
//!   fixed (eval-mode batch norm, no gradients) and train a one- or
//!   three-layer classifier on the embedding.
//! * `FineTune` starts from the pretrained weights with a fresh output
//!   layer and trains everything.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{ArchSpec, LayerSpec, Model, OutputKind, Section};
use crate::error::{invalid, Error, Result};
use crate::train::Checkpoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferKind {
    Scratch,
    FreezeL1,
    FreezeL3,
    FineTune,
}

impl std::str::FromStr for TransferKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scratch" => Ok(TransferKind::Scratch),
            "freeze_l1" => Ok(TransferKind::FreezeL1),
            "freeze_l3" => Ok(TransferKind::FreezeL3),
            "fine_tune" | "finetune" => Ok(TransferKind::FineTune),
            other => Err(invalid(format!(
                "unknown strategy {other:?} (scratch, freeze_l1, freeze_l3, fine_tune)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferStrategy {
    pub kind: TransferKind,
    /// Width of both hidden layers of the `FreezeL3` head.
    #[serde(default = "default_hidden")]
    pub head_hidden_dim: usize,
    pub new_n_classes: usize,
    /// Softmax for single-label tasks, sigmoid for multi-label ones.
    pub output: OutputKind,
}

fn default_hidden() -> usize {
    512
}

impl TransferStrategy {
    pub fn new(kind: TransferKind, new_n_classes: usize, output: OutputKind) -> Self {
        TransferStrategy {
            kind,
            head_hidden_dim: default_hidden(),
            new_n_classes,
            output,
        }
    }

    /// Classifier layers placed on the embedding.
    pub fn head(&self) -> Vec<LayerSpec> {
        let k = self.new_n_classes;
        match self.kind {
            TransferKind::Scratch | TransferKind::FineTune => {
                vec![LayerSpec::Dropout { p: 0.5 }, LayerSpec::linear("fc_out", k)]
            }
            TransferKind::FreezeL1 => vec![LayerSpec::linear("fc_out", k)],
            TransferKind::FreezeL3 => vec![
                LayerSpec::linear("fc_h1", self.head_hidden_dim),
                LayerSpec::Relu,
                LayerSpec::linear("fc_h2", self.head_hidden_dim),
                LayerSpec::Relu,
                LayerSpec::linear("fc_out", k),
            ],
        }
    }

    pub fn frozen_sections(&self) -> &'static [Section] {
        match self.kind {
            TransferKind::FreezeL1 | TransferKind::FreezeL3 => &[Section::Logmel, Section::Wavegram, Section::Backbone],
            TransferKind::Scratch | TransferKind::FineTune => &[],
        }
    }
}

/// Builds a downstream model from the source architecture `spec` and, for
/// every kind but `Scratch`, the pretrained checkpoint of that architecture.
pub fn apply_strategy(checkpoint: Option<&Checkpoint>, spec: &ArchSpec, strategy: &TransferStrategy, seed: u64) -> Result<Model<f32>> {
    if strategy.new_n_classes == 0 {
        return Err(invalid("new_n_classes must be > 0"));
    }
    if strategy.kind == TransferKind::FreezeL3 && strategy.head_hidden_dim == 0 {
        return Err(invalid("head_hidden_dim must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = match (strategy.kind, checkpoint) {
        (TransferKind::Scratch, _) => Model::new(spec.clone(), &mut rng)?,
        (_, None) => {
            return Err(invalid(format!(
                "strategy {:?} needs a pretrained checkpoint",
                strategy.kind
            )))
        }
        (_, Some(c)) => {
            if c.arch != *spec {
                return Err(Error::CheckpointMismatch(format!(
                    "checkpoint architecture {} does not match source spec {}",
                    c.arch.name, spec.name
                )));
            }
            c.to_model()?
        }
    };
    model.replace_head(strategy.head(), strategy.new_n_classes, strategy.output, &mut rng)?;
    model.set_frozen(strategy.frozen_sections());
    Ok(model)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotSpec {
    /// `None` keeps every clip.
    pub shots_per_class: Option<usize>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FewShotSelection {
    /// Chosen clip indices, ascending.
    pub indices: Vec<usize>,
    /// Classes with fewer clips than requested (all of their clips are kept).
    pub short_classes: Vec<usize>,
    /// Classes with no clip at all.
    pub empty_classes: Vec<usize>,
}

/// Seeded choice of `shots_per_class` clips per class, without replacement.
/// A clip belongs to its first labeled class; unlabeled clips are dropped.
pub fn few_shot_subset<V: AsRef<[f32]>>(targets: &[V], spec: &FewShotSpec) -> Result<FewShotSelection> {
    if spec.shots_per_class == Some(0) {
        return Err(invalid("shots_per_class must be >= 1"));
    }
    let k = targets.first().map_or(0, |t| t.as_ref().len());
    let mut by_class: BTreeMap<usize, Vec<usize>> = (0..k).map(|c| (c, Vec::new())).collect();
    for (i, t) in targets.iter().enumerate() {
        if let Some(c) = t.as_ref().iter().position(|&v| v > 0.5) {
            by_class.get_mut(&c).expect("class in range").push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sel = FewShotSelection {
        indices: Vec::new(),
        short_classes: Vec::new(),
        empty_classes: Vec::new(),
    };
    for (c, mut clips) in by_class {
        if clips.is_empty() {
            log::warn!("few-shot: class {c} has no clips, skipped");
            sel.empty_classes.push(c);
            continue;
        }
        match spec.shots_per_class {
            Some(s) if s < clips.len() => {
                clips.shuffle(&mut rng);
                clips.truncate(s);
            }
            Some(s) if s > clips.len() => {
                log::warn!("few-shot: class {c} has {} clips, fewer than {s}", clips.len());
                sel.short_classes.push(c);
            }
            _ => {}
        }
        sel.indices.extend(clips);
    }
    sel.indices.sort_unstable();
    Ok(sel)
}
