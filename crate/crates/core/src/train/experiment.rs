//! The scaled-down synthetic experiment: a fixed split of a seeded corpus,
//! trained once per ablation variant.

use super::{evaluate, fit, Ablation, MetricsReport, RunLog, TrainConfig};
use crate::error::Result;
use crate::layers::{init_model, ModelConfig};
use crate::signal::{synth_corpus, SegmentSet, SplitTag};
use crate::tensor::Scalar;

#[derive(Clone, Debug)]
pub struct SyntheticSplit {
    pub train: SegmentSet,
    pub val: SegmentSet,
    pub test: SegmentSet,
}

impl SyntheticSplit {
    /// 256 / 64 / 64 segments of 625 samples at 125 Hz.
    pub fn standard(seed: u64) -> Result<Self> {
        Self::with_sizes(seed, 256, 64, 64, 625, 125.0)
    }

    pub fn with_sizes(seed: u64, train: usize, val: usize, test: usize, length: usize, rate: f32) -> Result<Self> {
        let corpus = synth_corpus(train + val + test, seed, length, rate)?;
        Ok(Self {
            train: corpus.subset(0..train, SplitTag::Train),
            val: corpus.subset(train..train + val, SplitTag::Val),
            test: corpus.subset(train + val..train + val + test, SplitTag::Test),
        })
    }
}

#[derive(Clone, Debug)]
pub struct VariantResult {
    pub log: RunLog,
    /// Test metrics of the same-seed model before training.
    pub untrained: MetricsReport,
    pub trained: MetricsReport,
}

/// Trains `base` (with the variant's ablation applied) from seed `cfg.seed`
/// and scores it on the test split before and after.
pub fn run_variant<T: Scalar>(split: &SyntheticSplit, base: &ModelConfig, cfg: &TrainConfig) -> Result<VariantResult> {
    let ablation: Ablation = cfg.ablation;
    let mut model = init_model::<T>(&ablation.model_config(base), cfg.seed)?;
    let untrained = evaluate(&model, &split.test, &ablation)?;
    let log = fit(&mut model, &split.train, &split.val, cfg, None)?;
    let trained = evaluate(&model, &split.test, &ablation)?;
    Ok(VariantResult { log, untrained, trained })
}
