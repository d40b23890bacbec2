//! TOML job configuration.
//!
//! ```toml
//! [dsp]
//! sample_rate = 32000
//!
//! [arch]
//! name = "cnn14"
//! width_scale = 0.125
//! n_classes = 4
//!
//! [train]
//! seed = 7          # required
//! max_iterations = 200
//!
//! [augment]
//! mixup = true
//!
//! [paths]
//! index = "train.csv"
//! output_dir = "runs/a"
//! ```
//!
//! Every key has a default except `train.seed`. Unknown keys are rejected.
//! `--set section.key=value` overrides are applied to the parsed table before
//! validation, so overrides and file values go through the same checks.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use audiotag::arch::{
    build_cnn, build_wavegram_cnn, build_wavegram_logmel_cnn, ArchSpec, CnnDepth, CnnOptions, OutputKind,
    WavegramConfig,
};
use audiotag::data::{MixupConfig, MixupDomain, SpecAugmentConfig};
use audiotag::dsp::FrontEndConfig;
use audiotag::train::TrainConfig;
use audiotag::transfer::TransferKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default)]
    pub dsp: FrontEndConfig,
    #[serde(default)]
    pub arch: ArchSection,
    pub train: TrainSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub paths: PathsSection,
    #[serde(default)]
    pub transfer: TransferSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    /// cnn6, cnn10, cnn14, wavegram_cnn14 or wavegram_logmel_cnn14.
    pub name: String,
    pub width_scale: f64,
    pub n_classes: usize,
    pub output: OutputKind,
    /// Fixed clip length fed to the model; shorter clips are zero padded.
    pub clip_seconds: f64,
}

impl Default for ArchSection {
    fn default() -> Self {
        ArchSection {
            name: "cnn14".into(),
            width_scale: 1.0,
            n_classes: 527,
            output: OutputKind::Sigmoid,
            clip_seconds: 10.0,
        }
    }
}

/// Training loop settings. Unlike the other sections `seed` has no default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub seed: u64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_iters")]
    pub max_iterations: u64,
    #[serde(default = "d_true")]
    pub balanced: bool,
    #[serde(default = "d_eval_every")]
    pub eval_every: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_map: Option<f64>,
    /// Run data-parallel kernels on the rayon pool.
    #[serde(default = "d_true")]
    pub parallel: bool,
}

fn d_batch() -> usize {
    32
}
fn d_lr() -> f64 {
    1e-3
}
fn d_iters() -> u64 {
    1_000
}
fn d_true() -> bool {
    true
}
fn d_eval_every() -> u64 {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub mixup: bool,
    pub mixup_alpha: f64,
    pub mixup_domain: MixupDomain,
    pub specaug: bool,
    pub freq_mask_param: usize,
    pub n_freq_masks: usize,
    pub time_mask_param: usize,
    pub n_time_masks: usize,
}

impl Default for AugmentSection {
    fn default() -> Self {
        let m = MixupConfig::default();
        let s = SpecAugmentConfig::default();
        AugmentSection {
            mixup: true,
            mixup_alpha: m.alpha,
            mixup_domain: m.domain,
            specaug: true,
            freq_mask_param: s.freq_mask_param,
            n_freq_masks: s.n_freq_masks,
            time_mask_param: s.time_mask_param,
            n_time_masks: s.n_time_masks,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    /// Training index (`clip_id,path,labels`).
    pub index: Option<PathBuf>,
    /// Evaluation index; evaluation falls back to `index` when absent.
    pub eval_index: Option<PathBuf>,
    /// One class name per line.
    pub class_map: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferSection {
    pub strategy: TransferKind,
    pub head_hidden_dim: usize,
    /// Clips kept per class; absent keeps all.
    pub shots_per_class: Option<usize>,
}

impl Default for TransferSection {
    fn default() -> Self {
        TransferSection {
            strategy: TransferKind::FineTune,
            head_hidden_dim: 512,
            shots_per_class: None,
        }
    }
}

impl JobConfig {
    /// Reads `path` (if any), applies `key=value` overrides and validates.
    /// Without a file every section takes its defaults, but `train.seed`
    /// must then come from an override.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse().with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let has_seed = table
            .get("train")
            .and_then(|t| t.as_table())
            .is_some_and(|t| t.contains_key("seed"));
        if !has_seed {
            bail!("train.seed is required (runs must be reproducible from their config)");
        }
        let cfg: JobConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| anyhow!("invalid config: {e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults with the given seed; for commands that never draw random numbers.
    pub fn with_seed(seed: u64) -> Self {
        JobConfig {
            dsp: FrontEndConfig::default(),
            arch: ArchSection::default(),
            train: TrainSection {
                seed,
                batch_size: d_batch(),
                learning_rate: d_lr(),
                max_iterations: d_iters(),
                balanced: true,
                eval_every: d_eval_every(),
                target_map: None,
                parallel: true,
            },
            augment: AugmentSection::default(),
            paths: PathsSection::default(),
            transfer: TransferSection::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arch.clip_seconds > 0.0) {
            bail!("arch.clip_seconds must be > 0");
        }
        if self.arch.n_classes == 0 {
            bail!("arch.n_classes must be >= 1");
        }
        if self.augment.mixup && self.train.batch_size < 2 {
            bail!("train.batch_size must be >= 2 when mixup is on");
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn clip_samples(&self) -> usize {
        (self.arch.clip_seconds * self.dsp.sample_rate as f64).round() as usize
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.paths
            .output_dir
            .as_deref()
            .ok_or_else(|| anyhow!("paths.output_dir is not set"))
    }

    pub fn execution(&self) -> audiotag::Execution {
        if self.train.parallel {
            audiotag::Execution::Parallel
        } else {
            audiotag::Execution::Sequential
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let a = &self.augment;
        TrainConfig {
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            max_iterations: self.train.max_iterations,
            seed: self.train.seed,
            balanced: self.train.balanced,
            mixup: a.mixup.then_some(MixupConfig {
                alpha: a.mixup_alpha,
                domain: a.mixup_domain,
            }),
            specaug: a.specaug.then_some(SpecAugmentConfig {
                freq_mask_param: a.freq_mask_param,
                n_freq_masks: a.n_freq_masks,
                time_mask_param: a.time_mask_param,
                n_time_masks: a.n_time_masks,
            }),
            eval_every: self.train.eval_every,
            target_map: self.train.target_map,
            execution: self.execution(),
        }
    }

    pub fn arch_spec(&self) -> Result<ArchSpec> {
        let a = &self.arch;
        let opts = CnnOptions {
            n_classes: a.n_classes,
            width_scale: a.width_scale,
            frontend: self.dsp.clone(),
            output: a.output,
            ..Default::default()
        };
        let spec = match a.name.as_str() {
            "cnn6" => build_cnn(CnnDepth::Cnn6, &opts)?,
            "cnn10" => build_cnn(CnnDepth::Cnn10, &opts)?,
            "cnn14" => build_cnn(CnnDepth::Cnn14, &opts)?,
            "wavegram_cnn14" => {
                build_wavegram_cnn(&WavegramConfig::scaled(a.width_scale), &build_cnn(CnnDepth::Cnn14, &opts)?)?
            }
            "wavegram_logmel_cnn14" => build_wavegram_logmel_cnn(
                &WavegramConfig::scaled(a.width_scale),
                &build_cnn(CnnDepth::Cnn14, &opts)?,
            )?,
            other => bail!(
                "unknown arch.name {other:?} (cnn6, cnn10, cnn14, wavegram_cnn14, wavegram_logmel_cnn14)"
            ),
        };
        Ok(spec)
    }

    /// Writes the resolved configuration to `<dir>/config.toml`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = toml::to_string_pretty(self)?;
        std::fs::write(dir.join("config.toml"), text)?;
        Ok(())
    }
}

/// `section.key=value`; the value is parsed as TOML and falls back to a
/// bare string (`paths.index=a.csv`).
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override {spec:?} is not key=value"))?;
    let value: toml::Value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {key}: {p} is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
