//! Non-trainable signal processing: waveform → log-mel spectrogram.
//!
//! Defaults reproduce the 32 kHz pipeline: periodic Hamming window of 1024,
//! hop 320, centered reflect padding, 64 mel bands between 50 Hz and 14 kHz,
//! `10·log10(max(x, 1e-10))`. A 10 s clip gives a 1001 × 64 matrix at
//! 100 frames per second.

mod logmel;
mod matrix;
mod mel;
mod stft;
mod wave;
mod window;

pub use logmel::{logmel_extract, FrontEnd, FrontEndConfig, LogMelSpectrogram, DEFAULT_AMIN};
pub use matrix::Matrix;
pub use mel::{build_mel_filterbank, hz_to_mel, mel_to_hz, MelFilterbank};
pub use stft::{n_frames, stft_power, StftConfig, WindowKind};
pub use wave::{pad_or_truncate, read_wav, resample_linear, write_wav, Waveform};
pub use window::hamming_window;
