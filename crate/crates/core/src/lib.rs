//! Audio tagging toolkit.
//!
//! The crate covers the whole path from a PCM waveform to clip-level tag
//! probabilities and their evaluation:
//!
//! ```text
//! WAV -> resample/pad -> STFT power -> mel filterbank -> log  --\
//!                                                                +--> CNN14 backbone -> embedding -> sigmoid(K)
//! WAV -> strided/dilated conv1d stack -> reshape (Wavegram) ----/
//! ```
//!
//! * [`dsp`] deterministic front end (Hamming STFT, mel filterbank, log compression).
//! * [`autodiff`] a reverse-mode tape with the convolution, normalization, pooling
//!   and loss kernels the models need, plus Adam.
//! * [`arch`] declarative architecture specs (CNN6/10/14, Wavegram, Wavegram-Logmel),
//!   shape propagation, parameter and multi-add counting, and the trainable model.
//! * [`data`] dataset index, class-balanced sampling, mixup and SpecAugment.
//! * [`train`] training loop, checkpoints, and AP / AUC / d-prime evaluation.
//! * [`transfer`] scratch / frozen-feature / fine-tune strategies and few-shot subsets.
//!
//! Data-parallel inner loops run on rayon when the `parallel` feature is on
//! (the default); see [`par`].

pub mod arch;
pub mod data;
pub mod autodiff;

pub mod dsp;
pub mod error;
pub mod features;

pub mod par;
pub mod real;
pub mod train;
pub mod transfer;



pub use error::{Error, Result};
pub use par::Execution;
pub use real::Real;
