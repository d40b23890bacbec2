use serde::{Deserialize, Serialize};


use crate::dsp::{n_frames, FrontEndConfig};
use crate::error::{invalid, shape, Result};

/// One layer of a section. Parameterized layers carry a `name` that keys
/// their tensors in the parameter store (`<section>.<name>.weight`, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        name: String,
        out_channels: usize,
        kernel: [usize; 2],
        #[serde(default = "one2")]
        stride: [usize; 2],
        padding: [usize; 2],
        #[serde(default = "one2")]
        dilation: [usize; 2],
        #[serde(default)]
        bias: bool,
    },
    Conv1d {
        name: String,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        padding: usize,
        #[serde(default = "one")]
        dilation: usize,
        #[serde(default)]
        bias: bool,
    },
    /// Batch norm over the channel axis.
    BatchNorm { name: String },
    /// Batch norm over the last (frequency) axis.
    FreqBatchNorm { name: String },
    Relu,
    Dropout { p: f64 },
    AvgPool2d { size: [usize; 2] },
    MaxPool1d { size: usize },
    GlobalPool,
    Linear {
        name: String,
        out_features: usize,
        #[serde(default = "yes")]
        bias: bool,
    },
    /// `[C, T] -> [C / bins, T, bins]`.
    WavegramReshape { bins: usize },
}

fn one() -> usize {
    1
}
fn one2() -> [usize; 2] {
    [1, 1]
}
fn yes() -> bool {
    true
}

impl LayerSpec {
    pub fn name(&self) -> Option<&str> {
        match self {
            LayerSpec::Conv2d { name, .. }
            | LayerSpec::Conv1d { name, .. }
            | LayerSpec::BatchNorm { name }
            | LayerSpec::FreqBatchNorm { name }
            | LayerSpec::Linear { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::FreqBatchNorm { .. } => "freq_batch_norm",
            LayerSpec::Relu => "relu",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::AvgPool2d { .. } => "avg_pool2d",
            LayerSpec::MaxPool1d { .. } => "max_pool1d",
            LayerSpec::GlobalPool => "global_pool",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::WavegramReshape { .. } => "wavegram_reshape",
        }
    }

    pub(crate) fn conv2d(name: &str, out: usize, k: usize) -> Self {
        LayerSpec::Conv2d {
            name: name.into(),
            out_channels: out,
            kernel: [k, k],
            stride: [1, 1],
            padding: [k / 2, k / 2],
            dilation: [1, 1],
            bias: false,
        }
    }

    pub(crate) fn bn(name: &str) -> Self {
        LayerSpec::BatchNorm { name: name.into() }
    }

    pub(crate) fn linear(name: &str, out: usize) -> Self {
        LayerSpec::Linear {
            name: name.into(),
            out_features: out,
            bias: true,
        }
    }
}


/// Model sections, in evaluation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Logmel,
    Wavegram,
    Backbone,
    Head,
}

impl Section {
    pub fn prefix(self) -> &'static str {
        match self {
            Section::Logmel => "logmel",
            Section::Wavegram => "wavegram",
            Section::Backbone => "backbone",
            Section::Head => "head",
        }
    }

    pub const ALL: [Section; 4] = [Section::Logmel, Section::Wavegram, Section::Backbone, Section::Head];
}

/// Nonlinearity producing the clip-wise output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Independent presence probabilities (tagging, BCE loss).
    Sigmoid,
    /// Mutually exclusive classes (classification, cross-entropy loss).
    Softmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub name: String,
    pub n_classes: usize,
    pub embedding_dim: usize,
    pub width_scale: f64,
    pub frontend: FrontEndConfig,
    #[serde(default)]
    pub logmel: Option<Vec<LayerSpec>>,
    #[serde(default)]
    pub wavegram: Option<Vec<LayerSpec>>,
    pub backbone: Vec<LayerSpec>,
    pub head: Vec<LayerSpec>,
    pub output: OutputKind,
}

impl ArchSpec {
    pub fn section(&self, s: Section) -> Option<&[LayerSpec]> {
        match s {
            Section::Logmel => self.logmel.as_deref(),
            Section::Wavegram => self.wavegram.as_deref(),
            Section::Backbone => Some(&self.backbone),
            Section::Head => Some(&self.head),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ArchSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Structural checks plus a shape propagation over a nominal 10 s clip.
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.embedding_dim == 0 {
            return Err(invalid("n_classes and embedding_dim must be > 0"));
        }
        if !(self.width_scale > 0.0 && self.width_scale <= 1.0) {
            return Err(invalid(format!("width_scale must be in (0, 1], got {}", self.width_scale)));
        }
        if self.logmel.is_none() && self.wavegram.is_none() {
            return Err(invalid("architecture needs a log-mel or a wavegram input branch"));
        }
        let mut seen = std::collections::HashSet::new();
        for s in Section::ALL {
            for l in self.section(s).unwrap_or(&[]) {
                if let Some(n) = l.name() {
                    if !seen.insert(format!("{}.{n}", s.prefix())) {
                        return Err(invalid(format!("duplicate layer name {}.{n}", s.prefix())));
                    }
                }
            }
        }
        let prop = self.propagate(self.frontend.sample_rate as usize * 10)?;
        if prop.embedding_dim != self.embedding_dim {
            return Err(shape(format!(
                "backbone produces {} features, spec says embedding_dim {}",
                prop.embedding_dim, self.embedding_dim
            )));
        }
        if prop.output_dim != self.n_classes {
            return Err(shape(format!(
                "head produces {} outputs, spec says n_classes {}",
                prop.output_dim, self.n_classes
            )));
        }
        Ok(())
    }

    /// Shape propagation for a clip of `samples` waveform samples.
    pub fn propagate(&self, samples: usize) -> Result<Propagation> {
        let mut layers = Vec::new();
        let logmel_frames = match &self.logmel {
            Some(ls) => {
                let t = n_frames(samples, &self.frontend.stft())?;
                let s = propagate_section(Section::Logmel, ls, vec![1, t, self.frontend.n_mels], &mut layers)?;
                if s.len() != 3 {
                    return Err(shape(format!("log-mel branch must stay [C, T, F], got {s:?}")));
                }
                Some(s)
            }
            None => None,
        };
        let wave = match &self.wavegram {
            Some(ls) => {
                let s = propagate_section(Section::Wavegram, ls, vec![1, samples], &mut layers)?;
                if s.len() != 3 {
                    return Err(shape(format!("wavegram branch must end in [C, T, F], got {s:?}")));
                }
                Some(s)
            }
            None => None,
        };
        let fused = match (&logmel_frames, &wave) {
            (Some(a), Some(b)) => {
                if a[2] != b[2] {
                    return Err(shape(format!("branch frequency bins differ: {} vs {}", a[2], b[2])));
                }
                let t = fuse_frames(a[1], b[1])?;
                vec![a[0] + b[0], t, a[2]]
            }
            (Some(a), None) => a.clone(),
            (None, Some(b)) => b.clone(),
            (None, None) => return Err(invalid("no input branch")),
        };
        let emb = propagate_section(Section::Backbone, &self.backbone, fused.clone(), &mut layers)?;
        if emb.len() != 1 {
            return Err(shape(format!("backbone must end in a flat embedding, got {emb:?}")));
        }
        let out = propagate_section(Section::Head, &self.head, emb.clone(), &mut layers)?;
        if out.len() != 1 {
            return Err(shape(format!("head must end in a flat vector, got {out:?}")));
        }
        Ok(Propagation {
            samples,
            logmel_input: logmel_frames.map(|_| [n_frames(samples, &self.frontend.stft()).unwrap_or(0), self.frontend.n_mels]),
            wavegram_output: wave,
            fused_input: fused,
            embedding_dim: emb[0],
            output_dim: out[0],
            layers,
        })
    }
}

/// Frame count after cropping two branches to a common length. A mismatch
/// of more than one frame is an error.
pub fn fuse_frames(a: usize, b: usize) -> Result<usize> {
    if a.abs_diff(b) > 1 {
        return Err(shape(format!("branch frame counts {a} and {b} differ by more than one")));
    }
    Ok(a.min(b))
}

/// Per-layer record from shape propagation (shapes exclude the batch axis).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerInfo {
    pub section: Section,
    pub kind: &'static str,
    pub name: Option<String>,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
    /// Trainable scalars.
    pub params: u64,
    /// Multiply-accumulates of a direct evaluation.
    pub macs: u64,
    /// Additive bias operations.
    pub bias_ops: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Propagation {
    pub samples: usize,
    pub logmel_input: Option<[usize; 2]>,
    pub wavegram_output: Option<Vec<usize>>,
    pub fused_input: Vec<usize>,
    pub embedding_dim: usize,
    pub output_dim: usize,
    pub layers: Vec<LayerInfo>,
}

fn propagate_section(section: Section, layers: &[LayerSpec], mut s: Vec<usize>, out: &mut Vec<LayerInfo>) -> Result<Vec<usize>> {

    for l in layers {
        let in_shape = s.clone();
        let (mut params, mut macs, mut bias_ops) = (0u64, 0u64, 0u64);
        let err = |m: String| shape(format!("{}.{}: {m}", section.prefix(), l.name().unwrap_or(l.kind())));
        s = match l {
            LayerSpec::Conv2d { out_channels, kernel, stride, padding, dilation, bias, .. } => {
                if s.len() != 3 {
                    return Err(err(format!("conv2d needs [C, H, W], got {s:?}")));
                }
                let oh = crate::autodiff::conv_out_len(s[1], kernel[0], stride[0], padding[0], dilation[0]);
                let ow = crate::autodiff::conv_out_len(s[2], kernel[1], stride[1], padding[1], dilation[1]);
                let (Some(oh), Some(ow)) = (oh, ow) else {
                    return Err(err(format!("kernel {kernel:?} does not fit {s:?}")));
                };
                let kvol = (s[0] * kernel[0] * kernel[1]) as u64;
                params = kvol * *out_channels as u64 + if *bias { *out_channels as u64 } else { 0 };
                let outs = (*out_channels * oh * ow) as u64;
                macs = outs * kvol;
                bias_ops = if *bias { outs } else { 0 };
                vec![*out_channels, oh, ow]
            }
            LayerSpec::Conv1d { out_channels, kernel, stride, padding, dilation, bias, .. } => {
                if s.len() != 2 {
                    return Err(err(format!("conv1d needs [C, L], got {s:?}")));
                }
                let Some(ol) = crate::autodiff::conv_out_len(s[1], *kernel, *stride, *padding, *dilation) else {
                    return Err(err(format!("kernel {kernel} does not fit {s:?}")));
                };
                let kvol = (s[0] * kernel) as u64;
                params = kvol * *out_channels as u64 + if *bias { *out_channels as u64 } else { 0 };
                let outs = (*out_channels * ol) as u64;
                macs = outs * kvol;
                bias_ops = if *bias { outs } else { 0 };
                vec![*out_channels, ol]
            }
            LayerSpec::BatchNorm { .. } => {
                if s.is_empty() {
                    return Err(err("batch norm of a scalar".into()));
                }
                params = 2 * s[0] as u64;
                s
            }
            LayerSpec::FreqBatchNorm { .. } => {
                params = 2 * *s.last().ok_or_else(|| err("batch norm of a scalar".into()))? as u64;
                s
            }
            LayerSpec::Relu => s,
            LayerSpec::Dropout { p } => {
                if !(0.0..1.0).contains(p) {
                    return Err(err(format!("dropout p {p} outside [0, 1)")));
                }
                s
            }
            LayerSpec::AvgPool2d { size } => {
                if s.len() != 3 || size[0] == 0 || size[1] == 0 || s[1] / size[0] == 0 || s[2] / size[1] == 0 {
                    return Err(err(format!("avg_pool2d {size:?} does not fit {s:?}")));
                }
                vec![s[0], s[1] / size[0], s[2] / size[1]]
            }
            LayerSpec::MaxPool1d { size } => {
                if s.len() != 2 || *size == 0 || s[1] / size == 0 {
                    return Err(err(format!("max_pool1d {size} does not fit {s:?}")));
                }
                vec![s[0], s[1] / size]
            }
            LayerSpec::GlobalPool => {
                if s.len() < 2 {
                    return Err(err(format!("global_pool needs [C, ...], got {s:?}")));
                }
                vec![s[0]]
            }
            LayerSpec::Linear { out_features, bias, .. } => {
                if s.len() != 1 {
                    return Err(err(format!("linear needs a flat input, got {s:?}")));
                }
                params = (s[0] * out_features) as u64 + if *bias { *out_features as u64 } else { 0 };
                macs = (s[0] * out_features) as u64;
                bias_ops = if *bias { *out_features as u64 } else { 0 };
                vec![*out_features]
            }
            LayerSpec::WavegramReshape { bins } => {
                if s.len() != 2 || *bins == 0 || !s[0].is_multiple_of(*bins) {
                    return Err(err(format!("cannot split {s:?} channels into groups of {bins}")));
                }
                vec![s[0] / bins, s[1], *bins]
            }
        };
        out.push(LayerInfo {
            section,
            kind: l.kind(),
            name: l.name().map(str::to_string),
            in_shape,
            out_shape: s.clone(),
            params,
            macs,
            bias_ops,
        });
    }
    Ok(s)
}

/// `max(1, round(channels · width))`.
pub fn scale_channels(channels: usize, width: f64) -> usize {
    ((channels as f64 * width).round() as usize).max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CnnDepth {
    Cnn6,
    Cnn10,
    Cnn14,
}

impl CnnDepth {
    pub fn from_layers(n: usize) -> Result<Self> {
        match n {
            6 => Ok(CnnDepth::Cnn6),
            10 => Ok(CnnDepth::Cnn10),
            14 => Ok(CnnDepth::Cnn14),
            other => Err(invalid(format!("unknown CNN depth {other} (expected 6, 10 or 14)"))),
        }
    }

    fn full_embedding(self) -> usize {
        match self {
            CnnDepth::Cnn6 | CnnDepth::Cnn10 => 512,
            CnnDepth::Cnn14 => 2048,
        }
    }
}

/// Overrides for [`build_cnn`].
#[derive(Clone, Debug, PartialEq)]
pub struct CnnOptions {
    pub n_classes: usize,
    pub width_scale: f64,
    /// Defaults to the depth's full embedding width times `width_scale`.
    pub embedding_dim: Option<usize>,
    pub frontend: FrontEndConfig,
    pub output: OutputKind,
    pub pool_dropout: f64,
    pub fc_dropout: f64,
}

impl Default for CnnOptions {
    fn default() -> Self {
        CnnOptions {
            n_classes: 527,
            width_scale: 1.0,
            embedding_dim: None,
            frontend: FrontEndConfig::default(),
            output: OutputKind::Sigmoid,
            pool_dropout: 0.2,
            fc_dropout: 0.5,
        }
    }
}

/// CNN6 / CNN10 / CNN14 on log-mel input.
///
/// CNN14: six blocks of two 3×3 conv + BN + ReLU (64…2048 channels), 2×2
/// average pooling after blocks 1–5, global pooling, FC(embedding) + ReLU,
/// FC(K). CNN10: four such blocks. CNN6: four single 5×5 conv layers.
pub fn build_cnn(depth: CnnDepth, opts: &CnnOptions) -> Result<ArchSpec> {
    if !(opts.width_scale > 0.0 && opts.width_scale <= 1.0) {
        return Err(invalid(format!("width_scale must be in (0, 1], got {}", opts.width_scale)));
    }
    let (channels, double, kernel): (&[usize], bool, usize) = match depth {
        CnnDepth::Cnn6 => (&[64, 128, 256, 512], false, 5),
        CnnDepth::Cnn10 => (&[64, 128, 256, 512], true, 3),
        CnnDepth::Cnn14 => (&[64, 128, 256, 512, 1024, 2048], true, 3),
    };
    let mut backbone = Vec::new();
    for (i, &c) in channels.iter().enumerate() {
        let c = scale_channels(c, opts.width_scale);
        let b = i + 1;
        let convs = if double { 2 } else { 1 };
        for j in 1..=convs {
            backbone.push(LayerSpec::conv2d(&format!("block{b}.conv{j}"), c, kernel));
            backbone.push(LayerSpec::bn(&format!("block{b}.bn{j}")));
            backbone.push(LayerSpec::Relu);
        }
        if i + 1 < channels.len() {
            backbone.push(LayerSpec::AvgPool2d { size: [2, 2] });
            backbone.push(LayerSpec::Dropout { p: opts.pool_dropout });
        }
    }
    let emb = opts
        .embedding_dim
        .unwrap_or_else(|| scale_channels(depth.full_embedding(), opts.width_scale));
    backbone.extend([
        LayerSpec::GlobalPool,
        LayerSpec::Dropout { p: opts.fc_dropout },
        LayerSpec::linear("fc1", emb),
        LayerSpec::Relu,
    ]);
    let head = vec![
        LayerSpec::Dropout { p: opts.fc_dropout },
        LayerSpec::linear("fc_out", opts.n_classes),
    ];
    let name = match depth {
        CnnDepth::Cnn6 => "cnn6",
        CnnDepth::Cnn10 => "cnn10",
        CnnDepth::Cnn14 => "cnn14",
    };
    let spec = ArchSpec {
        name: name.into(),
        n_classes: opts.n_classes,
        embedding_dim: emb,
        width_scale: opts.width_scale,
        frontend: opts.frontend.clone(),
        logmel: Some(vec![LayerSpec::FreqBatchNorm { name: "bn0".into() }]),
        wavegram: None,
        backbone,
        head,
        output: opts.output,
    };
    spec.validate()?;
    Ok(spec)
}

/// Waveform front end producing a Wavegram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavegramConfig {
    pub pre_kernel: usize,
    pub pre_stride: usize,
    pub pre_channels: usize,
    /// Output channels of the three dilated blocks; the last one is `C`.
    pub block_channels: [usize; 3],
    pub dilations: [usize; 2],
    pub downsample: usize,
    /// Frequency bins `F` of the reshaped Wavegram.
    pub bins: usize,
}

impl Default for WavegramConfig {
    fn default() -> Self {
        WavegramConfig {
            pre_kernel: 11,
            pre_stride: 5,
            pre_channels: 64,
            block_channels: [64, 128, 128],
            dilations: [1, 2],
            downsample: 4,
            bins: 64,
        }
    }
}

impl WavegramConfig {
    /// Channel widths scaled by `width`; `C` is rounded to the nearest
    /// positive multiple of `F`.
    pub fn scaled(width: f64) -> Self {
        let base = WavegramConfig::default();
        let f = base.bins;
        let c = base.block_channels[2] as f64 * width;
        let c = ((c / f as f64).round() as usize).max(1) * f;
        WavegramConfig {
            pre_channels: scale_channels(base.pre_channels, width),
            block_channels: [
                scale_channels(base.block_channels[0], width),
                scale_channels(base.block_channels[1], width),
                c,
            ],
            ..base
        }
    }

    pub fn channels(&self) -> usize {
        self.block_channels[2]
    }

    /// Wavegram planes `C / F`.
    pub fn planes(&self) -> usize {
        self.channels() / self.bins
    }

    /// Total time decimation: pre-conv stride times three downsamplings.
    pub fn hop(&self) -> usize {
        self.pre_stride * self.downsample.pow(3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || !self.channels().is_multiple_of(self.bins) {
            return Err(invalid(format!(
                "wavegram channels {} must be a multiple of bins {}",
                self.channels(),
                self.bins
            )));
        }
        if self.pre_kernel == 0 || self.pre_stride == 0 || self.downsample == 0 || self.pre_channels == 0 {
            return Err(invalid("wavegram kernel, stride, downsample and channels must be > 0"));
        }
        Ok(())
    }
}

/// 1-D CNN: strided pre-conv, three blocks of two dilated conv layers each
/// followed by stride-`downsample` max pooling, then the `[C, T] -> [C/F, T, F]`
/// reshape.
pub fn build_wavegram_extractor(cfg: &WavegramConfig) -> Result<Vec<LayerSpec>> {
    cfg.validate()?;
    let mut layers = vec![
        LayerSpec::Conv1d {
            name: "pre_conv".into(),
            out_channels: cfg.pre_channels,
            kernel: cfg.pre_kernel,
            stride: cfg.pre_stride,
            padding: cfg.pre_kernel / 2,
            dilation: 1,
            bias: false,
        },
        LayerSpec::bn("pre_bn"),
        LayerSpec::Relu,
    ];
    for (b, &c) in cfg.block_channels.iter().enumerate() {
        for (j, &d) in cfg.dilations.iter().enumerate() {
            layers.push(LayerSpec::Conv1d {
                name: format!("block{}.conv{}", b + 1, j + 1),
                out_channels: c,
                kernel: 3,
                stride: 1,
                padding: d,
                dilation: d,
                bias: false,
            });
            layers.push(LayerSpec::bn(&format!("block{}.bn{}", b + 1, j + 1)));
            layers.push(LayerSpec::Relu);
        }
        layers.push(LayerSpec::MaxPool1d { size: cfg.downsample });
    }
    layers.push(LayerSpec::WavegramReshape { bins: cfg.bins });
    Ok(layers)
}

/// Wavegram and log-mel concatenated along channels in front of a CNN14 backbone.
pub fn build_wavegram_logmel_cnn(cfg: &WavegramConfig, cnn14: &ArchSpec) -> Result<ArchSpec> {
    if cnn14.logmel.is_none() {
        return Err(invalid("backbone spec has no log-mel branch"));
    }
    if cfg.bins != cnn14.frontend.n_mels {
        return Err(invalid(format!(
            "wavegram bins {} must equal log-mel bins {}",
            cfg.bins, cnn14.frontend.n_mels
        )));
    }
    let sr = cnn14.frontend.sample_rate as usize;
    if sr / cfg.hop() != sr / cnn14.frontend.hop_size || !sr.is_multiple_of(cfg.hop()) {
        return Err(invalid(format!(
            "wavegram hop {} and log-mel hop {} give different frame rates",
            cfg.hop(),
            cnn14.frontend.hop_size
        )));
    }
    let spec = ArchSpec {
        name: "wavegram_logmel_cnn14".into(),
        wavegram: Some(build_wavegram_extractor(cfg)?),
        ..cnn14.clone()
    };
    spec.validate()?;
    Ok(spec)
}

/// Wavegram-only variant: the same graph without the log-mel branch.
pub fn build_wavegram_cnn(cfg: &WavegramConfig, cnn14: &ArchSpec) -> Result<ArchSpec> {
    let spec = ArchSpec {
        name: "wavegram_cnn14".into(),
        logmel: None,
        ..build_wavegram_logmel_cnn(cfg, cnn14)?
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cnn14(width: f64) -> ArchSpec {
        build_cnn(
            CnnDepth::Cnn14,
            &CnnOptions {
                width_scale: width,
                ..CnnOptions::default()
            },
        )
        .unwrap()
    }

    fn conv_channels(spec: &ArchSpec) -> Vec<usize> {
        spec.backbone
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv2d { out_channels, name, .. } if name.ends_with("conv1") => Some(*out_channels),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn cnn14_embedding_and_channels() {
        let s = cnn14(1.0);
        assert_eq!(s.embedding_dim, 2048);
        assert_eq!(conv_channels(&s), vec![64, 128, 256, 512, 1024, 2048]);
        let s = cnn14(0.125);
        assert_eq!(conv_channels(&s), vec![8, 16, 32, 64, 128, 256]);
        assert_eq!(s.embedding_dim, 256);
    }

    #[test]
    fn cnn6_uses_5x5() {
        let s = build_cnn(CnnDepth::Cnn6, &CnnOptions::default()).unwrap();
        let kernels: Vec<_> = s
            .backbone
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv2d { kernel, .. } => Some(*kernel),
                _ => None,
            })
            .collect();
        assert_eq!(kernels, vec![[5, 5]; 4]);
        assert_eq!(s.embedding_dim, 512);
    }

    #[test]
    fn unknown_depth() {
        assert!(CnnDepth::from_layers(12).is_err());
        assert_eq!(CnnDepth::from_layers(10).unwrap(), CnnDepth::Cnn10);
    }

    #[test]
    fn wavegram_shapes_for_ten_seconds() {
        let cfg = WavegramConfig::default();
        let spec = build_wavegram_logmel_cnn(&cfg, &cnn14(1.0)).unwrap();
        let p = spec.propagate(320_000).unwrap();
        assert_eq!(p.wavegram_output, Some(vec![2, 1000, 64]));
        assert_eq!(p.logmel_input, Some([1001, 64]));
        assert_eq!(p.fused_input, vec![3, 1000, 64]);
    }

    #[test]
    fn wavegram_cnn_drops_logmel() {
        let spec = build_wavegram_cnn(&WavegramConfig::default(), &cnn14(1.0)).unwrap();
        assert!(spec.logmel.is_none());
        assert_eq!(spec.propagate(320_000).unwrap().fused_input, vec![2, 1000, 64]);
    }

    #[test]
    fn scaled_wavegram_keeps_multiple_of_bins() {
        let c = WavegramConfig::scaled(0.125);
        assert_eq!(c.block_channels, [8, 16, 64]);
        assert_eq!(c.planes(), 1);
        assert_eq!(WavegramConfig::scaled(1.0), WavegramConfig::default());
        let c = WavegramConfig::scaled(0.5);
        assert_eq!(c.channels() % 64, 0);
    }

    #[test]
    fn frame_fusion_rule() {
        assert_eq!(fuse_frames(1001, 1000).unwrap(), 1000);
        assert_eq!(fuse_frames(100, 100).unwrap(), 100);
        assert!(fuse_frames(1002, 1000).is_err());
    }

    #[test]
    fn bins_must_match_logmel() {
        let cfg = WavegramConfig {
            bins: 32,
            block_channels: [64, 128, 128],
            ..WavegramConfig::default()
        };
        assert!(build_wavegram_logmel_cnn(&cfg, &cnn14(1.0)).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let s = build_wavegram_logmel_cnn(&WavegramConfig::scaled(0.25), &cnn14(0.25)).unwrap();
        let back = ArchSpec::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
