//! Signal-domain utilities: gradient channel, ABP normalisation, BP
//! extraction, metrics, segment files and a synthetic corpus.

mod peaks;
mod segments;
mod synth;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use peaks::{extract_sbp_dbp, extract_sbp_dbp_with, find_peaks, PeakParams};
pub use segments::{
    decode_segments, encode_segments, ingest_csv, parse_csv_rows, read_segments, write_segments,
    CsvLayout, IngestOptions, Segment, SegmentSet, SplitTag, SANITY_BAND, SEGMENT_MAGIC,
};
pub use synth::{synth_corpus, synth_corpus_with_truth, BpTruth, SynthCorpus};

/// Forward difference with the last value replicated, so the output has the
/// input's length.
pub fn grad_channel<T: Float>(x: &[T]) -> Result<Vec<T>> {
    if x.len() < 2 {
        return Err(Error::Usage(format!(
            "grad_channel needs at least 2 samples, got {}",
            x.len()
        )));
    }
    let mut g: Vec<T> = x.windows(2).map(|w| w[1] - w[0]).collect();
    g.push(g[g.len() - 1]);
    Ok(g)
}

/// Affine ABP normalisation `(x - min) / (max - min)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbpNorm {
    pub min_mmhg: f32,
    pub max_mmhg: f32,
}

impl Default for AbpNorm {
    fn default() -> Self {
        Self {
            min_mmhg: 20.0,
            max_mmhg: 200.0,
        }
    }
}

impl AbpNorm {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_mmhg.is_finite() && self.max_mmhg.is_finite() && self.max_mmhg > self.min_mmhg) {
            return Err(Error::config(
                "norm",
                format!(
                    "need finite max > min, got [{}, {}]",
                    self.min_mmhg, self.max_mmhg
                ),
            ));
        }
        Ok(())
    }

    pub fn span(&self) -> f64 {
        self.max_mmhg as f64 - self.min_mmhg as f64
    }

    pub fn normalize(&self, mmhg: &[f64]) -> Vec<f64> {
        let (lo, span) = (self.min_mmhg as f64, self.span());
        mmhg.iter().map(|x| (x - lo) / span).collect()
    }

    pub fn denormalize(&self, normalized: &[f64]) -> Vec<f64> {
        let (lo, span) = (self.min_mmhg as f64, self.span());
        normalized.iter().map(|y| y * span + lo).collect()
    }
}

/// Checked form of [`AbpNorm::normalize`].
pub fn normalize_abp(mmhg: &[f64], norm: &AbpNorm) -> Result<Vec<f64>> {
    norm.validate()?;
    Ok(norm.normalize(mmhg))
}

pub fn denormalize_abp(normalized: &[f64], norm: &AbpNorm) -> Result<Vec<f64>> {
    norm.validate()?;
    Ok(norm.denormalize(normalized))
}

fn check_pair(op: &'static str, pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::dim(
            op,
            format!("pred has {} samples, gt has {}", pred.len(), gt.len()),
        ));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair("mae", pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / gt.len() as f64)
}

/// RMSE divided by the ground-truth range.
pub fn nrmse(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair("nrmse", pred, gt)?;
    let (lo, hi) = gt
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::Numeric(format!(
            "nrmse: ground truth is flat at {lo}, range normaliser is zero"
        )));
    }
    let mse = pred.iter().zip(gt).map(|(p, g)| (p - g).powi(2)).sum::<f64>() / gt.len() as f64;
    Ok(mse.sqrt() / (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grad_examples() {
        assert_eq!(grad_channel(&[1.0, 3.0, 6.0, 10.0]).unwrap(), vec![2.0, 3.0, 4.0, 4.0]);
        assert_eq!(grad_channel(&[4.0f32; 5]).unwrap(), vec![0.0; 5]);
        let ramp: Vec<f64> = (0..10).map(|i| 0.5 * i as f64 - 2.0).collect();
        assert!(grad_channel(&ramp).unwrap().iter().all(|g| (g - 0.5).abs() < 1e-12));
        assert!(grad_channel(&[1.0]).is_err());
    }

    #[test]
    fn norm_endpoints_and_roundtrip() {
        let n = AbpNorm::default();
        assert_eq!(n.normalize(&[20.0, 200.0]), vec![0.0, 1.0]);
        let x = [37.5, 120.0, 81.25];
        let back = n.denormalize(&n.normalize(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-6 * a.abs());
        }
        let bad = AbpNorm {
            min_mmhg: 50.0,
            max_mmhg: 50.0,
        };
        assert!(matches!(normalize_abp(&x, &bad), Err(Error::Config { .. })));
    }

    #[test]
    fn metric_examples() {
        let gt = [0.0, 2.0, 0.0, 2.0];
        assert_eq!(mae(&gt, &gt).unwrap(), 0.0);
        assert_eq!(nrmse(&gt, &gt).unwrap(), 0.0);
        assert_eq!(mae(&[1.0; 4], &gt).unwrap(), 1.0);
        assert_eq!(nrmse(&[1.0; 4], &gt).unwrap(), 0.5);
        assert!(matches!(nrmse(&[1.0; 3], &[2.0; 3]), Err(Error::Numeric(_))));
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn vecs(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(-10.0f64..10.0, n),
            prop::collection::vec(-10.0f64..10.0, n),
        )
    }

    proptest! {
        #[test]
        fn grad_is_linear((x, y) in vecs(16), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mix: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
            let lhs = grad_channel(&mix).unwrap();
            let gx = grad_channel(&x).unwrap();
            let gy = grad_channel(&y).unwrap();
            for i in 0..16 {
                let rhs = a * gx[i] + b * gy[i];
                prop_assert!((lhs[i] - rhs).abs() <= 1e-6 * (1.0 + rhs.abs()));
            }
        }

        #[test]
        fn metric_scaling((p, g) in vecs(12), k in 0.01f64..100.0) {
            let sp: Vec<f64> = p.iter().map(|v| v * k).collect();
            let sg: Vec<f64> = g.iter().map(|v| v * k).collect();
            let n0 = nrmse(&p, &g).unwrap();
            prop_assert!((nrmse(&sp, &sg).unwrap() - n0).abs() <= 1e-9 * (1.0 + n0));
            let m0 = mae(&p, &g).unwrap();
            prop_assert!((mae(&sp, &sg).unwrap() - k * m0).abs() <= 1e-9 * (1.0 + k * m0));
        }

        #[test]
        fn peaks_shift_by_constant(c in -200.0f64..200.0, hr in 0.9f64..1.8) {
            let x: Vec<f64> = (0..625)
                .map(|i| 100.0 + 20.0 * (2.0 * std::f64::consts::PI * hr * i as f64 / 125.0).sin())
                .collect();
            let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
            let (s0, d0) = extract_sbp_dbp(&x, 125.0).unwrap();
            let (s, d) = extract_sbp_dbp(&shifted, 125.0).unwrap();
            prop_assert!((s - s0 - c).abs() <= 1e-9 && (d - d0 - c).abs() <= 1e-9);
        }
    }
}
