//! Reverse-mode differentiation over a recording tape, and the kernels the
//! audio models are built from.
//!
//! A [`Tape`] is created per forward pass. Leaves are registered with
//! [`Tape::leaf`]; every op method records its output together with a
//! closure that maps the output gradient back onto its inputs.
//! [`Tape::backward`] walks the records in exact reverse order and
//! accumulates leaf gradients additively, so a value consumed twice
//! receives the sum of both branches.
//!
//! All convolutions use the cross-correlation convention (no kernel flip).

mod ops;
mod optim;
mod tape;
mod tensor;

pub use ops::conv::{conv_out_len, ConvParams};
pub use ops::norm::{BatchNormState, BatchStats};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tape::{BackwardCtx, Tape, Var};
pub use tensor::Tensor;

/// Train/eval switch for batch norm and dropout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Mode {
    Train,
    Eval,
}

/// Lower clamp applied to predictions before the log in the BCE loss.
pub const BCE_EPS: f64 = 1e-7;
