//! Invertibility and gradient audits over whole models.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{batch_tensors, compute_loss, Ablation};
use crate::autodiff::{finite_diff_check, GradReport, Selection};
use crate::error::Result;
use crate::layers::InnPar;
use crate::signal::SegmentSet;
use crate::tensor::{Scalar, Tensor3};

#[derive(Clone, Debug, PartialEq)]
pub struct RoundtripReport {
    /// Largest `|x - inverse(forward(x))|` over all inputs.
    pub max_abs_err: f64,
    pub worst_input: usize,
    pub inputs: usize,
}

/// `n` inputs of shape `1 x channels x L`, uniform in `[-1, 1]`.
pub fn random_inputs<T: Scalar>(model: &InnPar<T>, n: usize, seed: u64) -> Vec<Tensor3<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = (1, model.config().channels, model.config().signal_length);
    (0..n)
        .map(|_| Tensor3::from_fn(shape, |_, _, _| T::of(rng.gen_range(-1.0..=1.0))))
        .collect()
}

pub fn roundtrip_audit<T: Scalar>(model: &InnPar<T>, inputs: &[Tensor3<T>]) -> Result<RoundtripReport> {
    let mut report = RoundtripReport {
        max_abs_err: 0.0,
        worst_input: 0,
        inputs: inputs.len(),
    };
    for (i, x) in inputs.iter().enumerate() {
        let back = model.inverse(&model.forward(x)?)?;
        let err = back.max_abs_diff(x)?.as_f64();
        if !(err <= report.max_abs_err) {
            report.max_abs_err = err;
            report.worst_input = i;
        }
    }
    Ok(report)
}

/// Central-difference check of the training loss on `batch` with respect to
/// the selected parameters.
pub fn gradcheck_model(
    model: &mut InnPar<f64>,
    batch: &SegmentSet,
    alpha: f64,
    h: f64,
    selection: Selection,
) -> Result<GradReport> {
    let indices: Vec<usize> = (0..batch.len()).collect();
    let length = model.config().signal_length;
    let (x, y) = batch_tensors::<f64>(batch.segments(), &indices, length, &Ablation::default())?;
    finite_diff_check(model, h, selection, |m, tape| {
        let xv = tape.input(x.clone());
        let yv = tape.input(y.clone());
        let pred = m.forward_on(tape, &xv)?;
        compute_loss(tape, &pred, &yv, alpha)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{init_model, ModelConfig};
    use crate::signal::synth_corpus;

    #[test]
    fn tiny_roundtrip_is_tight() {
        let model = init_model::<f64>(&ModelConfig::tiny(), 2).unwrap();
        let inputs = random_inputs(&model, 5, 3);
        let r = roundtrip_audit(&model, &inputs).unwrap();
        assert_eq!(r.inputs, 5);
        assert!(r.max_abs_err <= 1e-8, "{r:?}");
    }

    #[test]
    fn tiny_gradcheck_sampled() {
        let mut model = init_model::<f64>(&ModelConfig::tiny(), 4).unwrap();
        let batch = synth_corpus(2, 4, 32, 8.0).unwrap();
        let sel = Selection::Sample { per_param: 3, seed: 1 };
        let r = gradcheck_model(&mut model, &batch, 1.0, 1e-5, sel).unwrap();
        assert!(r.passes(1e-4), "{r:?}");
    }
}
