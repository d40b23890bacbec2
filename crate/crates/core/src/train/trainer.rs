use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::metrics::MetricReport;
use crate::arch::{Model, ModelInput, OutputKind};
use crate::autodiff::{adam_step, AdamConfig, AdamState, Mode, Tape, Tensor};
use crate::data::{
    mix_pairs, spec_augment, BalancedSampler, ClipSet, MixupConfig, MixupDomain, Sampler, SpecAugmentConfig,
    UniformSampler,
};
use crate::error::{invalid, Error, Result};
use crate::par::Execution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Items per optimizer step after mixing.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_iterations: u64,
    pub seed: u64,
    pub balanced: bool,
    pub mixup: Option<MixupConfig>,
    pub specaug: Option<SpecAugmentConfig>,
    /// Evaluate every this many iterations (0 disables periodic evaluation).
    pub eval_every: u64,
    /// Stop once the evaluated mAP reaches this value.
    pub target_map: Option<f64>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-3,
            max_iterations: 1_000,
            seed: 0,
            balanced: true,
            mixup: Some(MixupConfig::default()),
            specaug: Some(SpecAugmentConfig::default()),
            eval_every: 100,
            target_map: None,
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be > 0"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!("learning_rate must be >= 0, got {}", self.learning_rate)));
        }
        if let Some(m) = &self.mixup {
            m.validate()?;
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iteration: u64,
    pub loss: f64,
    pub map: Option<f64>,
    pub mauc: Option<f64>,
    pub d_prime: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<HistoryRow>,
    /// Iterations run by this call.
    pub iterations: u64,
    /// First evaluated iteration whose mAP met `target_map`.
    pub reached_target_at: Option<u64>,
    pub last_report: Option<MetricReport>,
}

/// Owns a model with its optimizer state and iteration counter.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model<f32>,
    pub adam: AdamConfig,
    /// Adam state per parameter-store index.
    states: Vec<Option<AdamState<f32>>>,
    pub iteration: u64,
}

impl Trainer {
    pub fn new(model: Model<f32>) -> Self {
        let n = model.params.len();
        Trainer {
            model,
            adam: AdamConfig::default(),
            states: vec![None; n],
            iteration: 0,
        }
    }

    /// Restores model, iteration counter and optimizer moments.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Trainer::new(ckpt.to_model()?);
        t.iteration = ckpt.iteration;
        for (name, st) in ckpt.optimizer_states()? {
            let i = t
                .model
                .params
                .position(&name)
                .ok_or_else(|| Error::CheckpointMismatch(format!("optimizer state for unknown {name}")))?;
            t.states[i] = Some(st);
        }
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let states: Vec<(String, AdamState<f32>)> = self
            .states
            .iter()
            .enumerate()
            .filter_map(|(i, s)| s.as_ref().map(|s| (self.model.params.entry(i).name.clone(), s.clone())))
            .collect();
        Checkpoint::from_model(&self.model, self.iteration).with_optimizer(&states)
    }

    /// Runs up to `cfg.max_iterations` steps on `train`, evaluating on
    /// `eval` (or on `train` when `None`) every `cfg.eval_every` steps.
    pub fn train(&mut self, train: &ClipSet, eval: Option<&ClipSet>, cfg: &TrainConfig) -> Result<TrainOutcome> {
        cfg.validate()?;
        if train.n_classes() != self.model.spec.n_classes {
            return Err(Error::Data(format!(
                "dataset has {} classes, model has {}",
                train.n_classes(),
                self.model.spec.n_classes
            )));
        }
        if self.states.len() != self.model.params.len() {
            self.states.resize(self.model.params.len(), None);
        }
        self.adam.lr = cfg.learning_rate;
        let mut sampler: Box<dyn Sampler> = if cfg.balanced {
            Box::new(BalancedSampler::from_targets(&train.targets, cfg.seed)?)
        } else {
            Box::new(UniformSampler::new(train.len(), cfg.seed)?)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
        let eval = eval.unwrap_or(train);
        let mut out = TrainOutcome {
            history: Vec::new(),
            iterations: 0,
            reached_target_at: None,
            last_report: None,
        };
        for _ in 0..cfg.max_iterations {
            let loss = self.step(train, sampler.as_mut(), cfg, &mut rng)?;
            self.iteration += 1;
            out.iterations += 1;
            let mut row = HistoryRow {
                iteration: self.iteration,
                loss,
                map: None,
                mauc: None,
                d_prime: None,
            };
            if cfg.eval_every > 0 && self.iteration.is_multiple_of(cfg.eval_every) {
                let (report, _) = evaluate(&self.model, eval, cfg.batch_size.max(1), cfg.execution)?;
                row.map = Some(report.macro_avg.map);
                row.mauc = Some(report.macro_avg.mauc);
                row.d_prime = Some(report.macro_avg.d_prime);
                log::info!(
                    "iter {} loss {:.4} mAP {:.3} mAUC {:.3}",
                    self.iteration,
                    loss,
                    report.macro_avg.map,
                    report.macro_avg.mauc
                );
                let hit = cfg.target_map.is_some_and(|t| report.macro_avg.map >= t);
                out.last_report = Some(report);
                out.history.push(row);
                if hit {
                    out.reached_target_at = Some(self.iteration);
                    break;
                }
            } else {
                out.history.push(row);
            }
        }
        Ok(out)
    }

    fn step(&mut self, set: &ClipSet, sampler: &mut dyn Sampler, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<f64> {
        let exec = cfg.execution;
        let draw = if cfg.mixup.is_some() { 2 * cfg.batch_size } else { cfg.batch_size };
        let idx = sampler.next_batch(draw);
        let (wave, target) = set.batch(&idx);
        let input = self.build_input(wave, target, cfg, rng)?;
        let (input, target) = input;

        let mut tape = Tape::with_execution(exec);
        let fwd = self.model.forward(&mut tape, &input, Mode::Train, rng)?;
        let loss = match self.model.spec.output {
            OutputKind::Sigmoid => tape.bce_loss(fwd.output, &target)?,
            OutputKind::Softmax => tape.softmax_cross_entropy(fwd.logits, &target)?,
        };
        let loss_value = tape.value(loss).data()[0] as f64;
        if !loss_value.is_finite() {
            let origin = tape
                .first_non_finite()
                .map_or("no recorded tensor".to_string(), |(i, op)| format!("tensor #{i} produced by {op}"));
            return Err(Error::NonFinite(format!(
                "loss {loss_value} at iteration {}; first non-finite value in {origin}",
                self.iteration + 1
            )));
        }
        tape.backward(loss)?;
        if self.adam.lr > 0.0 {
            for &(i, var) in &fwd.params {
                let Some(g) = tape.take_grad(var) else { continue };
                let entry = self.model.params.entry_mut(i);
                let st = self.states[i].get_or_insert_with(|| AdamState::new(g.len()));
                adam_step(entry.tensor.data_mut(), &g, st, &self.adam)?;
            }
        }
        self.model.apply_bn_updates(&fwd.bn_updates)?;
        Ok(loss_value)
    }

    /// Applies mixup and SpecAugment and assembles the model input.
    fn build_input(
        &self,
        wave: Tensor<f32>,
        target: Tensor<f32>,
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Result<(ModelInput<f32>, Tensor<f32>)> {
        let spec = &self.model.spec;
        let needs_wave = spec.wavegram.is_some();
        let needs_mel = spec.logmel.is_some();
        let exec = cfg.execution;
        let (n, l) = (wave.shape()[0], wave.shape()[1]);
        let k = target.shape()[1];

        let mut mel = None;
        let (mut wave, mut target) = (wave, target);
        if let Some(mix) = &cfg.mixup {
            let lambdas = mix.draw_lambdas(n / 2, rng)?;
            let mixed_t = mix_pairs(target.data(), n, &lambdas)?;
            target = Tensor::new(vec![n / 2, k], mixed_t)?;
            match mix.domain {
                MixupDomain::Waveform => {
                    wave = Tensor::new(vec![n / 2, l], mix_pairs(wave.data(), n, &lambdas)?)?;
                }
                MixupDomain::LogMel => {
                    if needs_mel {
                        let m = self.logmels(&wave, exec)?;
                        let (t, f) = (m.shape()[1], m.shape()[2]);
                        mel = Some(Tensor::new(vec![n / 2, t, f], mix_pairs(m.data(), n, &lambdas)?)?);
                    }
                    if needs_wave {
                        wave = Tensor::new(vec![n / 2, l], mix_pairs(wave.data(), n, &lambdas)?)?;
                    }
                }
            }
        }
        if needs_mel && mel.is_none() {
            mel = Some(self.logmels(&wave, exec)?);
        }
        if let (Some(sa), Some(m)) = (&cfg.specaug, mel.as_mut()) {
            let (b, t, f) = (m.shape()[0], m.shape()[1], m.shape()[2]);
            for i in 0..b {
                spec_augment(&mut m.data_mut()[i * t * f..(i + 1) * t * f], t, f, sa, rng)?;
            }
        }
        let input = ModelInput {
            waveform: needs_wave.then_some(wave),
            logmel: mel,
        };
        Ok((input, target))
    }

    fn logmels(&self, wave: &Tensor<f32>, exec: Execution) -> Result<Tensor<f32>> {
        self.model.logmel_batch(wave, exec)
    }
}

/// Eval-mode predictions over a whole set in chunks of `batch`, with the
/// resulting metrics. Returns `(report, row-major [N, K] scores)`.
pub fn evaluate(model: &Model<f32>, set: &ClipSet, batch: usize, exec: Execution) -> Result<(MetricReport, Vec<f32>)> {
    let k = model.spec.n_classes;
    if set.n_classes() != k {
        return Err(Error::Data(format!("eval set has {} classes, model has {k}", set.n_classes())));
    }
    let mut scores = Vec::with_capacity(set.len() * k);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let (wave, _) = set.batch(chunk);
        let out = model.predict(&ModelInput::from_waveform(wave), exec)?;
        scores.extend_from_slice(out.clipwise.data());
    }
    let targets: Vec<f32> = set.targets.iter().flatten().copied().collect();
    Ok((MetricReport::compute(&scores, &targets, k)?, scores))
}

/// `iteration,loss,map,mauc,d_prime`; metric cells are empty between evaluations.
pub fn write_history_csv(rows: &[HistoryRow], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iteration,loss,map,mauc,d_prime")?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        writeln!(f, "{},{},{},{},{}", r.iteration, r.loss, opt(r.map), opt(r.mauc), opt(r.d_prime))?;
    }
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_cnn, CnnDepth, CnnOptions};
    use crate::data::{toy_dataset, ToyConfig};

    fn setup() -> (Trainer, ClipSet) {
        let set = toy_dataset(&ToyConfig {
            n_clips: 8,
            duration_secs: 0.25,
            ..ToyConfig::default()
        })
        .unwrap();
        let spec = build_cnn(
            CnnDepth::Cnn6,
            &CnnOptions {
                n_classes: 4,
                width_scale: 0.0625,
                ..CnnOptions::default()
            },
        )
        .unwrap();
        let model = Model::new(spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        (Trainer::new(model), set)
    }

    fn cfg(lr: f64, iters: u64) -> TrainConfig {
        TrainConfig {
            batch_size: 4,
            learning_rate: lr,
            max_iterations: iters,
            eval_every: 0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (mut t, set) = setup();
        let before = t.model.params.clone();
        t.train(&set, None, &cfg(0.0, 3)).unwrap();
        for i in t.model.trainable_indices() {
            assert_eq!(t.model.params.entry(i), before.entry(i));
        }
    }

    #[test]
    fn training_is_reproducible() {
        let (mut a, set) = setup();
        let (mut b, _) = setup();
        let ha = a.train(&set, None, &cfg(1e-3, 3)).unwrap();
        let hb = b.train(&set, None, &cfg(1e-3, 3)).unwrap();
        assert_eq!(ha.history, hb.history);
        assert_eq!(a.model.params, b.model.params);
    }

    #[test]
    fn checkpoint_resumes_optimizer() {
        let (mut t, set) = setup();
        t.train(&set, None, &cfg(1e-3, 2)).unwrap();
        let c = t.checkpoint();
        let r = Trainer::from_checkpoint(&Checkpoint::decode(&c.encode().unwrap()).unwrap()).unwrap();
        assert_eq!(r.iteration, 2);
        assert_eq!(r.states, t.states);
        assert_eq!(r.model.params, t.model.params);
    }

    #[test]
    fn history_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        let rows = [
            HistoryRow {
                iteration: 1,
                loss: 0.5,
                map: None,
                mauc: None,
                d_prime: None,
            },
            HistoryRow {
                iteration: 2,
                loss: 0.25,
                map: Some(1.0),
                mauc: Some(0.5),
                d_prime: Some(0.0),
            },
        ];
        write_history_csv(&rows, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text, "iteration,loss,map,mauc,d_prime\n1,0.5,,,\n2,0.25,1,0.5,0\n");
    }
}
