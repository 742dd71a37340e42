//! Loss, training loop, evaluation and ablation settings.

mod audit;
mod eval;
mod experiment;
mod fit;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, Backend};
use crate::error::{Error, Result};
use crate::layers::ModelConfig;
use crate::signal::{grad_channel, Segment};
use crate::tensor::{Scalar, Tensor3};

pub use audit::{gradcheck_model, random_inputs, roundtrip_audit, RoundtripReport};
pub use eval::{evaluate, MetricsReport, SegmentMetrics};
pub use experiment::{run_variant, SyntheticSplit, VariantResult};
pub use fit::{fit, EpochRecord, RunLog};

/// Switches reproducing the ablation variants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    /// Feed PPG twice instead of `(PPG, ∇PPG)` and supervise `(ABP, ABP)`.
    pub ae1_duplicate_signal: bool,
    /// Single-scale multi-scale modules.
    pub ae2_single_scale: bool,
    /// Drop the gradient term from the loss.
    pub ae3_alpha_zero: bool,
}

impl Ablation {
    pub fn ae1() -> Self {
        Self {
            ae1_duplicate_signal: true,
            ..Self::default()
        }
    }

    pub fn ae2() -> Self {
        Self {
            ae2_single_scale: true,
            ..Self::default()
        }
    }

    pub fn ae3() -> Self {
        Self {
            ae3_alpha_zero: true,
            ..Self::default()
        }
    }

    /// The architecture actually trained under this ablation.
    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        if self.ae2_single_scale {
            base.single_scale()
        } else {
            base.clone()
        }
    }
}

/// What the second output channel is compared against in the loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientTarget {
    /// Output channel 2 is supervised directly.
    #[default]
    OutputChannel,
    /// The first difference of output channel 1 is supervised instead.
    Recomputed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub alpha: f64,
    pub seed: u64,
    pub ablation: Ablation,
    /// Save a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    pub gradient_target: GradientTarget,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            epochs: 500,
            batch_size: 128,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            alpha: 1.0,
            seed: 0,
            ablation: Ablation::default(),
            checkpoint_every: 0,
            gradient_target: GradientTarget::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("train.alpha", format!("{} must be finite and >= 0", self.alpha)));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("train.lr", format!("{} must be finite and >= 0", self.lr)));
        }
        for (field, b) in [("train.beta1", self.beta1), ("train.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(field, format!("{b} must lie in [0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config("train.eps", "must be positive"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    /// Loss weight after the ablation is applied.
    pub fn effective_alpha(&self) -> f64 {
        if self.ablation.ae3_alpha_zero {
            0.0
        } else {
            self.alpha
        }
    }
}

/// `mean |Ŷ - Y| + alpha * mean |∇Ŷ - ∇Y|` over batch and length.
pub fn compute_loss<T: Scalar, B: Backend<T>>(be: &B, pred: &B::V, gt: &B::V, alpha: T) -> Result<B::V> {
    compute_loss_with(be, pred, gt, alpha, GradientTarget::OutputChannel)
}

pub fn compute_loss_with<T: Scalar, B: Backend<T>>(
    be: &B,
    pred: &B::V,
    gt: &B::V,
    alpha: T,
    target: GradientTarget,
) -> Result<B::V> {
    let (ps, gs) = (be.shape(pred), be.shape(gt));
    if ps != gs || ps.1 != 2 {
        return Err(Error::dim(
            "compute_loss",
            format!("pred {ps:?} and gt {gs:?} must match with 2 channels"),
        ));
    }
    let y_hat = be.slice_channels(pred, 0, 1)?;
    let grad_hat = match target {
        GradientTarget::OutputChannel => be.slice_channels(pred, 1, 1)?,
        GradientTarget::Recomputed => be.diff(&y_hat)?,
    };
    let signal = be.mean(&be.abs(&be.sub(&y_hat, &be.slice_channels(gt, 0, 1)?)?));
    let gradient = be.mean(&be.abs(&be.sub(&grad_hat, &be.slice_channels(gt, 1, 1)?)?));
    be.add(&signal, &be.scale(&gradient, alpha))
}

fn check_length(op: &'static str, got: usize, length: usize) -> Result<()> {
    if got != length {
        return Err(Error::dim(op, format!("segment length {got}, model expects {length}")));
    }
    Ok(())
}

/// `(PPG, ∇PPG)` as a `1 x 2 x L` tensor, or `(PPG, PPG)` under AE1.
pub fn make_model_input<T: Scalar>(ppg: &[f32], length: usize, ablation: &Ablation) -> Result<Tensor3<T>> {
    check_length("make_model_input", ppg.len(), length)?;
    pair_channels(ppg, ablation.ae1_duplicate_signal)
}

/// `(ABP, ∇ABP)`, or `(ABP, ABP)` under AE1, normalised units.
pub fn make_target<T: Scalar>(abp: &[f32], length: usize, ablation: &Ablation) -> Result<Tensor3<T>> {
    check_length("make_target", abp.len(), length)?;
    pair_channels(abp, ablation.ae1_duplicate_signal)
}

fn pair_channels<T: Scalar>(x: &[f32], duplicate: bool) -> Result<Tensor3<T>> {
    let first: Vec<T> = x.iter().map(|&v| T::of(v as f64)).collect();
    let second = if duplicate { first.clone() } else { grad_channel(&first)? };
    Tensor3::from_channels(&[&first, &second])
}

/// Stacks the inputs and targets of `indices` into batch tensors.
pub(crate) fn batch_tensors<T: Scalar>(
    segments: &[Segment],
    indices: &[usize],
    length: usize,
    ablation: &Ablation,
) -> Result<(Tensor3<T>, Tensor3<T>)> {
    let mut xs = Vec::with_capacity(indices.len());
    let mut ys = Vec::with_capacity(indices.len());
    for &i in indices {
        xs.push(make_model_input(&segments[i].ppg, length, ablation)?);
        ys.push(make_target(&segments[i].abp, length, ablation)?);
    }
    Ok((Tensor3::concat_batch(&xs)?, Tensor3::concat_batch(&ys)?))
}
