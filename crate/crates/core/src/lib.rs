//! Invertible neural network for PPG to arterial blood pressure waveform
//! reconstruction.
//!
//! The network maps a PPG segment and its first difference, `(X, ∇X)`, to an
//! ABP segment and its first difference, `(Y, ∇Y)`, through a stack of
//! invertible blocks. Every block is exactly invertible, so the same weights
//! also reconstruct PPG from ABP.
//!
//! - [`tensor`]: the `batch x channels x length` array and its primitives.
//! - [`autodiff`]: tape-based reverse mode, a finite-difference audit, Adam.
//! - [`layers`]: 1x1 convolution, affine coupling, multi-scale module, the
//!   composed [`InnPar`](layers::InnPar) model, checkpoints.
//! - [`signal`]: gradient channel, normalisation, SBP/DBP extraction,
//!   metrics, segment files, the synthetic corpus.
//! - [`train`]: the L1 signal + gradient loss, the training loop, evaluation.
//! - [`cli`]: the `innpar` command-line front end.

// `!(a <= b)` is used on purpose so that NaN takes the error branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod layers;
pub mod signal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
