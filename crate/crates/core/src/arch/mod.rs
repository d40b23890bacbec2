//! Declarative architectures and the trainable model built from them.
//!
//! An [`ArchSpec`] is plain data (serializable to TOML/JSON) listing the
//! layers of each section:
//!
//! * `logmel`: normalization of the `[B, 1, T, F]` log-mel input,
//! * `wavegram`: 1-D conv stack on the raw waveform, reshaped to `[B, C/F, T, F]`,
//! * `backbone`: 2-D conv blocks, global pooling, embedding FC,
//! * `head`: the classifier.
//!
//! When both input branches exist they are cropped to a common frame count
//! and concatenated along channels (log-mel first).
//!
//! The same spec drives [`Model`] construction, shape propagation and the
//! parameter / multi-add counters in [`complexity`].

pub mod complexity;
mod model;
mod params;
mod spec;

pub use complexity::{count_multiadds, count_params, mac_count, Complexity};
pub use model::{Forward, Model, ModelInput, ModelOutput};
pub use params::{ParamEntry, ParamKind, ParamStore};
pub use spec::{
    build_cnn, build_wavegram_cnn, build_wavegram_extractor, build_wavegram_logmel_cnn, fuse_frames,
    scale_channels, ArchSpec, CnnDepth, CnnOptions, LayerInfo, LayerSpec, OutputKind, Propagation,
    Section, WavegramConfig,
};
