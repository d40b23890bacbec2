use std::collections::BTreeSet;

use rand::Rng;

use super::params::{init_params, param_name, ParamKind, ParamStore};
use super::spec::{fuse_frames, ArchSpec, LayerSpec, OutputKind, Section};
use crate::autodiff::{BatchNormState, BatchStats, ConvParams, Mode, Tape, Tensor, Var};
use crate::dsp::{FrontEnd, Waveform};
use crate::error::{invalid, shape, Error, Result};
use crate::par::{map_range, Execution};
use crate::real::Real;

/// A batch of model inputs. A log-mel branch uses `logmel` when present and
/// otherwise computes it from `waveform`; a wavegram branch needs `waveform`.
#[derive(Clone, Debug, Default)]
pub struct ModelInput<T> {
    /// `[B, L]` samples at the front end's sample rate.
    pub waveform: Option<Tensor<T>>,
    /// `[B, T, F]` log-mel frames.
    pub logmel: Option<Tensor<T>>,
}

impl<T: Real> ModelInput<T> {
    pub fn from_waveform(w: Tensor<T>) -> Self {
        ModelInput {
            waveform: Some(w),
            logmel: None,
        }
    }

    pub fn from_logmel(l: Tensor<T>) -> Self {
        ModelInput {
            waveform: None,
            logmel: Some(l),
        }
    }

    pub fn batch_size(&self) -> Result<usize> {
        let a = self.waveform.as_ref().map(|w| w.shape()[0]);
        let b = self.logmel.as_ref().map(|l| l.shape()[0]);
        match (a, b) {
            (Some(a), Some(b)) if a != b => Err(shape(format!("waveform batch {a} vs log-mel batch {b}"))),
            (Some(n), _) | (_, Some(n)) => Ok(n),
            (None, None) => Err(invalid("model input has neither waveform nor log-mel")),
        }
    }
}

/// Handles into the tape produced by one forward pass.
#[derive(Debug)]
pub struct Forward<T> {
    /// `[B, K]` probabilities (sigmoid or softmax of `logits`).
    pub output: Var,
    pub logits: Var,
    /// `[B, E]` post-ReLU embedding.
    pub embedding: Var,
    /// Store index and tape variable of every parameter that receives gradients.
    pub params: Vec<(usize, Var)>,
    /// Train-mode batch statistics keyed by layer prefix, to be folded into
    /// the running estimates with [`Model::apply_bn_updates`].
    pub bn_updates: Vec<(String, BatchStats<T>)>,
}

/// Inference result for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput<T> {
    pub clipwise: Tensor<T>,
    pub embedding: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct Model<T> {
    pub spec: ArchSpec,
    pub params: ParamStore<T>,
    frozen: BTreeSet<Section>,
    frontend: Option<FrontEnd>,
}

const BN_MOMENTUM: f64 = 0.1;
const BN_EPS: f64 = 1e-5;

impl<T: Real> Model<T> {
    pub fn new<R: Rng + ?Sized>(spec: ArchSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&spec, rng)?;
        let frontend = match spec.logmel {
            Some(_) => Some(FrontEnd::new(spec.frontend.clone())?),
            None => None,
        };
        Ok(Model {
            spec,
            params,
            frozen: BTreeSet::new(),
            frontend,
        })
    }

    pub fn frontend(&self) -> Option<&FrontEnd> {
        self.frontend.as_ref()
    }

    /// Frozen sections get no gradients and always run in eval mode.
    pub fn set_frozen(&mut self, sections: &[Section]) {
        self.frozen = sections.iter().copied().collect();
    }

    pub fn is_frozen(&self, s: Section) -> bool {
        self.frozen.contains(&s)
    }

    pub fn frozen_sections(&self) -> Vec<Section> {
        self.frozen.iter().copied().collect()
    }

    /// Store indices of trainable tensors outside frozen sections.
    pub fn trainable_indices(&self) -> Vec<usize> {
        self.params
            .entries()
            .iter()
            .enumerate()
            .filter(|(_, e)| e.kind == ParamKind::Trainable && !self.frozen.iter().any(|s| in_section(&e.name, *s)))
            .map(|(i, _)| i)
            .collect()
    }

    /// Swaps the classifier for freshly initialized `head` layers.
    pub fn replace_head<R: Rng + ?Sized>(&mut self, head: Vec<LayerSpec>, n_classes: usize, output: OutputKind, rng: &mut R) -> Result<()> {
        let spec = ArchSpec {
            head,
            n_classes,
            output,
            ..self.spec.clone()
        };
        spec.validate()?;
        let fresh: ParamStore<T> = init_params(&spec, rng)?;
        self.params.remove_prefix(&format!("{}.", Section::Head.prefix()));
        for e in fresh.entries() {
            if in_section(&e.name, Section::Head) {
                self.params.insert(e.name.clone(), e.kind, e.tensor.clone())?;
            }
        }
        self.spec = spec;
        Ok(())
    }

    /// Training forward: gradients for every non-frozen parameter.
    pub fn forward<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, input: &ModelInput<T>, mode: Mode, rng: &mut R) -> Result<Forward<T>> {
        self.run(tape, input, mode, true, rng)
    }

    /// Eval-mode inference without gradient bookkeeping.
    pub fn predict(&self, input: &ModelInput<T>, exec: Execution) -> Result<ModelOutput<T>> {
        let mut tape = Tape::with_execution(exec);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let f = self.run(&mut tape, input, Mode::Eval, false, &mut rng)?;
        Ok(ModelOutput {
            clipwise: tape.value(f.output).clone(),
            embedding: tape.value(f.embedding).clone(),
        })
    }

    pub fn apply_bn_updates(&mut self, updates: &[(String, BatchStats<T>)]) -> Result<()> {
        for (prefix, stats) in updates {
            let mean_name = format!("{prefix}.running_mean");
            let var_name = format!("{prefix}.running_var");
            let mut st = BatchNormState {
                running_mean: self.buffer(&mean_name)?.to_vec(),
                running_var: self.buffer(&var_name)?.to_vec(),
                momentum: T::lit(BN_MOMENTUM),
                eps: T::lit(BN_EPS),
            };
            st.update(stats);
            self.params.get_mut(&mean_name).unwrap().data_mut().copy_from_slice(&st.running_mean);
            self.params.get_mut(&var_name).unwrap().data_mut().copy_from_slice(&st.running_var);
        }
        Ok(())
    }

    fn buffer(&self, name: &str) -> Result<&[T]> {
        self.params
            .get(name)
            .map(|t| t.data())
            .ok_or_else(|| Error::CheckpointMismatch(format!("missing buffer {name}")))
    }

    /// `[B, T, F]` log-mel frames of a `[B, L]` waveform batch.
    pub fn logmel_batch(&self, w: &Tensor<T>, exec: Execution) -> Result<Tensor<T>> {
        let fe = self.frontend.as_ref().ok_or_else(|| invalid("model has no log-mel front end"))?;
        let (b, l) = (w.shape()[0], w.shape()[1]);
        let mels = map_range(exec, b, |i| {
            let samples = w.data()[i * l..(i + 1) * l]
                .iter()
                .map(|v| v.to_f32().unwrap_or(f32::NAN))
                .collect();
            fe.extract(&Waveform::new(samples, fe.config.sample_rate)?)
        });
        let mels = mels.into_iter().collect::<Result<Vec<_>>>()?;
        let (t, f) = (mels[0].n_frames(), mels[0].n_mels());
        let mut data = Vec::with_capacity(b * t * f);
        for m in &mels {
            data.extend(m.values.data.iter().map(|&v| T::lit(v as f64)));
        }
        Tensor::new(vec![b, t, f], data)
    }

    fn run<R: Rng + ?Sized>(&self, tape: &mut Tape<T>, input: &ModelInput<T>, mode: Mode, grads: bool, rng: &mut R) -> Result<Forward<T>> {
        let b = input.batch_size()?;
        if let Some(w) = &input.waveform {
            if w.ndim() != 2 {
                return Err(shape(format!("waveform batch must be [B, L], got {:?}", w.shape())));
            }
        }
        let mut ctx = Ctx {
            params: Vec::new(),
            bn_updates: Vec::new(),
            mode,
            grads,
        };

        let mel_out = match &self.spec.logmel {
            Some(layers) => {
                let lm = match (&input.logmel, &input.waveform) {
                    (Some(l), _) => l.clone(),
                    (None, Some(w)) => self.logmel_batch(w, tape.execution())?,
                    (None, None) => unreachable!("batch_size checked"),
                };
                let s = lm.shape().to_vec();
                if s.len() != 3 || s[2] != self.spec.frontend.n_mels {
                    return Err(shape(format!(
                        "log-mel batch must be [B, T, {}], got {s:?}",
                        self.spec.frontend.n_mels
                    )));
                }
                let x = tape.constant(lm.reshaped(vec![b, 1, s[1], s[2]])?);
                Some(self.run_section(tape, Section::Logmel, layers, x, rng, &mut ctx)?)
            }
            None => None,
        };
        let wave_out = match &self.spec.wavegram {
            Some(layers) => {
                let w = input
                    .waveform
                    .as_ref()
                    .ok_or_else(|| invalid("wavegram branch needs waveform input"))?;
                let l = w.shape()[1];
                let x = tape.constant(w.clone().reshaped(vec![b, 1, l])?);
                Some(self.run_section(tape, Section::Wavegram, layers, x, rng, &mut ctx)?)
            }
            None => None,
        };
        let fused = match (mel_out, wave_out) {
            (Some(m), Some(w)) => {
                let t = fuse_frames(tape.shape(m)[2], tape.shape(w)[2])?;
                let m = tape.narrow(m, 2, 0, t)?;
                let w = tape.narrow(w, 2, 0, t)?;
                tape.concat(&[m, w], 1)?
            }
            (Some(x), None) | (None, Some(x)) => x,
            (None, None) => return Err(invalid("no input branch")),
        };
        let embedding = self.run_section(tape, Section::Backbone, &self.spec.backbone, fused, rng, &mut ctx)?;
        let logits = self.run_section(tape, Section::Head, &self.spec.head, embedding, rng, &mut ctx)?;
        let output = match self.spec.output {
            OutputKind::Sigmoid => tape.sigmoid(logits),
            OutputKind::Softmax => tape.softmax(logits)?,
        };
        Ok(Forward {
            output,
            logits,
            embedding,
            params: ctx.params,
            bn_updates: ctx.bn_updates,
        })
    }

    fn param(&self, tape: &mut Tape<T>, section: Section, layer: &str, what: &str, ctx: &mut Ctx<T>) -> Result<Var> {
        let name = param_name(section, layer, what);
        let i = self
            .params
            .position(&name)
            .ok_or_else(|| Error::CheckpointMismatch(format!("missing parameter {name}")))?;
        let train = ctx.grads && !self.is_frozen(section);
        let v = tape.leaf(self.params.entry(i).tensor.clone(), train);
        if train {
            ctx.params.push((i, v));
        }
        Ok(v)
    }

    fn run_section<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<T>,
        section: Section,
        layers: &[LayerSpec],
        mut x: Var,
        rng: &mut R,
        ctx: &mut Ctx<T>,
    ) -> Result<Var> {
        let mode = if self.is_frozen(section) { Mode::Eval } else { ctx.mode };
        for l in layers {
            x = match l {
                LayerSpec::Conv2d { name, stride, padding, dilation, bias, .. } => {
                    let w = self.param(tape, section, name, "weight", ctx)?;
                    let b = if *bias { Some(self.param(tape, section, name, "bias", ctx)?) } else { None };
                    tape.conv2d(
                        x,
                        w,
                        b,
                        ConvParams {
                            stride: *stride,
                            padding: *padding,
                            dilation: *dilation,
                        },
                    )?
                }
                LayerSpec::Conv1d { name, stride, padding, dilation, bias, .. } => {
                    let w = self.param(tape, section, name, "weight", ctx)?;
                    let b = if *bias { Some(self.param(tape, section, name, "bias", ctx)?) } else { None };
                    tape.conv1d(x, w, b, *stride, *padding, *dilation)?
                }
                LayerSpec::BatchNorm { name } | LayerSpec::FreqBatchNorm { name } => {
                    let axis = match l {
                        LayerSpec::BatchNorm { .. } => 1,
                        _ => tape.shape(x).len() - 1,
                    };
                    let g = self.param(tape, section, name, "gamma", ctx)?;
                    let bt = self.param(tape, section, name, "beta", ctx)?;
                    let st = BatchNormState {
                        running_mean: self.buffer(&param_name(section, name, "running_mean"))?.to_vec(),
                        running_var: self.buffer(&param_name(section, name, "running_var"))?.to_vec(),
                        momentum: T::lit(BN_MOMENTUM),
                        eps: T::lit(BN_EPS),
                    };
                    let (y, stats) = tape.batch_norm(x, g, bt, axis, &st, mode)?;
                    if let Some(stats) = stats {
                        ctx.bn_updates.push((format!("{}.{name}", section.prefix()), stats));
                    }
                    y
                }
                LayerSpec::Relu => tape.relu(x),
                LayerSpec::Dropout { p } => tape.dropout(x, *p, mode, rng)?,
                LayerSpec::AvgPool2d { size } => tape.avg_pool2d(x, *size)?,
                LayerSpec::MaxPool1d { size } => tape.max_pool1d(x, *size)?,
                LayerSpec::GlobalPool => tape.global_pool(x)?,
                LayerSpec::Linear { name, bias, .. } => {
                    let w = self.param(tape, section, name, "weight", ctx)?;
                    let b = if *bias { Some(self.param(tape, section, name, "bias", ctx)?) } else { None };
                    tape.linear(x, w, b)?
                }
                LayerSpec::WavegramReshape { bins } => {
                    let s = tape.shape(x).to_vec();
                    if s.len() != 3 || !s[1].is_multiple_of(*bins) {
                        return Err(shape(format!("wavegram reshape of {s:?} into {bins} bins")));
                    }
                    let y = tape.reshape(x, &[s[0], s[1] / bins, *bins, s[2]])?;
                    tape.transpose_last2(y)?
                }
            };
        }
        Ok(x)
    }
}

struct Ctx<T> {
    params: Vec<(usize, Var)>,
    bn_updates: Vec<(String, BatchStats<T>)>,
    mode: Mode,
    grads: bool,
}

fn in_section(name: &str, s: Section) -> bool {
    name.strip_prefix(s.prefix()).is_some_and(|r| r.starts_with('.'))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{build_cnn, build_wavegram_logmel_cnn, count_params, CnnDepth, CnnOptions, WavegramConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_opts() -> CnnOptions {
        CnnOptions {
            n_classes: 5,
            width_scale: 0.0625,
            ..CnnOptions::default()
        }
    }

    fn clip_batch(b: usize, len: usize) -> Tensor<f32> {
        Tensor::from_fn(&[b, len], |i| ((i as f32) * 0.013).sin() * 0.3)
    }

    #[test]
    fn param_store_matches_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for depth in [CnnDepth::Cnn6, CnnDepth::Cnn10, CnnDepth::Cnn14] {
            let spec = build_cnn(depth, &small_opts()).unwrap();
            let m: Model<f32> = Model::new(spec.clone(), &mut rng).unwrap();
            assert_eq!(m.params.trainable_count(), count_params(&spec).unwrap());
        }
    }

    #[test]
    fn forward_shapes_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = build_cnn(CnnDepth::Cnn6, &small_opts()).unwrap();
        let m: Model<f32> = Model::new(spec, &mut rng).unwrap();
        let out = m.predict(&ModelInput::from_waveform(clip_batch(3, 16_000)), Execution::default()).unwrap();
        assert_eq!(out.clipwise.shape(), &[3, 5]);
        assert_eq!(out.embedding.shape(), &[3, 32]);
        assert!(out.clipwise.data().iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cnn = build_cnn(CnnDepth::Cnn14, &small_opts()).unwrap();
        let spec = build_wavegram_logmel_cnn(&WavegramConfig::scaled(0.0625), &cnn).unwrap();
        let m: Model<f32> = Model::new(spec, &mut rng).unwrap();
        let x = ModelInput::from_waveform(clip_batch(2, 32_000));
        let a = m.predict(&x, Execution::default()).unwrap();
        let b = m.predict(&x, Execution::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn train_forward_reports_bn_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = build_cnn(CnnDepth::Cnn6, &small_opts()).unwrap();
        let mut m: Model<f32> = Model::new(spec, &mut rng).unwrap();
        let mut tape = Tape::new();
        let f = m
            .forward(&mut tape, &ModelInput::from_waveform(clip_batch(2, 16_000)), Mode::Train, &mut rng)
            .unwrap();
        // bn0 + four conv blocks.
        assert_eq!(f.bn_updates.len(), 5);
        let before = m.params.get("backbone.block1.bn1.running_mean").unwrap().clone();
        m.apply_bn_updates(&f.bn_updates).unwrap();
        assert_ne!(m.params.get("backbone.block1.bn1.running_mean").unwrap(), &before);
    }

    #[test]
    fn frozen_sections_get_no_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = build_cnn(CnnDepth::Cnn6, &small_opts()).unwrap();
        let mut m: Model<f32> = Model::new(spec, &mut rng).unwrap();
        m.set_frozen(&[Section::Logmel, Section::Backbone]);
        let mut tape = Tape::new();
        let f = m
            .forward(&mut tape, &ModelInput::from_waveform(clip_batch(2, 16_000)), Mode::Train, &mut rng)
            .unwrap();
        assert!(f.params.iter().all(|(i, _)| m.params.entry(*i).name.starts_with("head.")));
        assert!(f.bn_updates.is_empty());
        assert_eq!(m.trainable_indices().len(), 2);
    }

    #[test]
    fn replace_head_changes_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = build_cnn(CnnDepth::Cnn6, &small_opts()).unwrap();
        let mut m: Model<f32> = Model::new(spec, &mut rng).unwrap();
        let emb_w = m.params.get("backbone.fc1.weight").unwrap().clone();
        m.replace_head(vec![LayerSpec::linear("fc", 3)], 3, OutputKind::Softmax, &mut rng)
            .unwrap();
        assert_eq!(m.params.get("head.fc.weight").unwrap().shape(), &[3, 32]);
        assert!(m.params.get("head.fc_out.weight").is_none());
        assert_eq!(m.params.get("backbone.fc1.weight").unwrap(), &emb_w);
        let out = m.predict(&ModelInput::from_waveform(clip_batch(2, 16_000)), Execution::default()).unwrap();
        for row in out.clipwise.data().chunks(3) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn missing_waveform_for_wavegram() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cnn = build_cnn(CnnDepth::Cnn14, &small_opts()).unwrap();
        let spec = build_wavegram_logmel_cnn(&WavegramConfig::scaled(0.0625), &cnn).unwrap();
        let m: Model<f32> = Model::new(spec, &mut rng).unwrap();
        let lm = Tensor::zeros(&[1, 101, 64]);
        assert!(m.predict(&ModelInput::from_logmel(lm), Execution::default()).is_err());
    }
}
