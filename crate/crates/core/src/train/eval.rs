use serde::{Deserialize, Serialize};

use super::{batch_tensors, Ablation};
use crate::error::{Error, Result};
use crate::layers::InnPar;
use crate::signal::{extract_sbp_dbp, mae, nrmse, SegmentSet};
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub mae: f64,
    pub nrmse: f64,
    pub sbp_pred: f64,
    pub dbp_pred: f64,
    pub sbp_true: f64,
    pub dbp_true: f64,
}

/// Dataset means. Waveform errors are in normalised units unless suffixed
/// `_mmhg`; NRMSE is the same in both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub waveform_mae: f64,
    pub waveform_nrmse: f64,
    pub waveform_mae_mmhg: f64,
    pub sbp_mae_mmhg: f64,
    pub dbp_mae_mmhg: f64,
    pub n_segments: usize,
    pub per_segment: Vec<SegmentMetrics>,
}

const EVAL_CHUNK: usize = 32;

/// Runs the forward map on every test segment and scores output channel 1
/// against the ground-truth ABP.
pub fn evaluate<T: Scalar>(model: &InnPar<T>, test: &SegmentSet, ablation: &Ablation) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::Usage("evaluate on an empty test set".into()));
    }
    let length = model.config().signal_length;
    let rate = test.sample_rate_hz as f64;
    let norm = test.norm;
    let indices: Vec<usize> = (0..test.len()).collect();
    let mut per_segment = Vec::with_capacity(test.len());
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, _) = batch_tensors::<T>(test.segments(), chunk, length, ablation)?;
        let pred = model.forward(&x)?;
        for (b, &i) in chunk.iter().enumerate() {
            let y_hat: Vec<f64> = pred.row(b, 0).iter().map(|v| v.as_f64()).collect();
            let y: Vec<f64> = test.segments()[i].abp.iter().map(|&v| v as f64).collect();
            let (sbp_pred, dbp_pred) = extract_sbp_dbp(&norm.denormalize(&y_hat), rate)?;
            let (sbp_true, dbp_true) = extract_sbp_dbp(&norm.denormalize(&y), rate)?;
            per_segment.push(SegmentMetrics {
                mae: mae(&y_hat, &y)?,
                nrmse: nrmse(&y_hat, &y)?,
                sbp_pred,
                dbp_pred,
                sbp_true,
                dbp_true,
            });
        }
    }
    let n = per_segment.len() as f64;
    let mean = |f: &dyn Fn(&SegmentMetrics) -> f64| per_segment.iter().map(f).sum::<f64>() / n;
    let report = MetricsReport {
        waveform_mae: mean(&|s| s.mae),
        waveform_nrmse: mean(&|s| s.nrmse),
        waveform_mae_mmhg: mean(&|s| s.mae) * norm.span(),
        sbp_mae_mmhg: mean(&|s| (s.sbp_pred - s.sbp_true).abs()),
        dbp_mae_mmhg: mean(&|s| (s.dbp_pred - s.dbp_true).abs()),
        n_segments: per_segment.len(),
        per_segment,
    };
    let summary = [
        report.waveform_mae,
        report.waveform_nrmse,
        report.sbp_mae_mmhg,
        report.dbp_mae_mmhg,
    ];
    if summary.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite metrics {summary:?}")));
    }
    Ok(report)
}
