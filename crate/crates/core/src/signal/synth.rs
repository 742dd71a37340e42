//! Deterministic synthetic PPG/ABP pairs.
//!
//! Each segment draws a heart rate, a cycle phase and a few shape
//! parameters. ABP follows a fixed pulse template between DBP and SBP; PPG
//! is a delayed harmonic pulse train with baseline wander. SBP is tied to the
//! PPG's second-harmonic weight and DBP to the heart rate, so the pressure
//! levels are recoverable from the PPG alone.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AbpNorm, Segment, SegmentSet};
use crate::error::{Error, Result};

/// Generating pressures of one synthetic segment, mmHg.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpTruth {
    pub sbp: f64,
    pub dbp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub set: SegmentSet,
    pub truth: Vec<BpTruth>,
}

const PEAK_PHASE: f64 = 0.22;
const NOTCH_PHASE: f64 = 0.45;
const NOTCH_WIDTH: f64 = 0.04;
const NOTCH_HEIGHT: f64 = 0.06;
const PPG_DELAY: f64 = 0.12;

/// ABP pulse shape over one cycle, 0 at the foot and 1 at the systolic peak.
/// The dicrotic bump is a shoulder on the decline: the slope never turns
/// positive, so each cycle has a single trough.
fn abp_template(theta: f64) -> f64 {
    let base = if theta < PEAK_PHASE {
        0.5 * (1.0 - (PI * theta / PEAK_PHASE).cos())
    } else {
        let u = (theta - PEAK_PHASE) / (1.0 - PEAK_PHASE);
        (1.0 - u).powi(2) * (1.0 + 2.0 * u)
    };
    base + NOTCH_HEIGHT * (-((theta - NOTCH_PHASE) / NOTCH_WIDTH).powi(2)).exp()
}

pub fn synth_corpus(n: usize, seed: u64, length: usize, sample_rate_hz: f32) -> Result<SegmentSet> {
    Ok(synth_corpus_with_truth(n, seed, length, sample_rate_hz)?.set)
}

pub fn synth_corpus_with_truth(
    n: usize,
    seed: u64,
    length: usize,
    sample_rate_hz: f32,
) -> Result<SynthCorpus> {
    if n == 0 {
        return Err(Error::Usage("synth_corpus needs at least one segment".into()));
    }
    if length < 2 {
        return Err(Error::Usage(format!("synth_corpus length {length} is below 2")));
    }
    let norm = AbpNorm::default();
    let rate = sample_rate_hz as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut segments = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    for _ in 0..n {
        let u_sbp: f64 = rng.gen();
        let u_hr: f64 = rng.gen();
        let hr = 0.9 + 0.9 * u_hr;
        let phase: f64 = rng.gen();
        let a2 = 0.2 + 0.4 * u_sbp;
        let a3: f64 = rng.gen_range(0.0..0.15);
        let psi2: f64 = rng.gen_range(-0.3..0.3);
        let wander_hz: f64 = rng.gen_range(0.1..0.3);
        let wander_phase: f64 = rng.gen_range(0.0..2.0 * PI);

        let sbp = 100.0 + 60.0 * u_sbp;
        let dbp = (60.0 + 40.0 * u_hr).min(sbp - 20.0);

        let cycle = |i: usize| hr * i as f64 / rate + phase;
        let abp: Vec<f64> = (0..length)
            .map(|i| dbp + (sbp - dbp) * abp_template(cycle(i).fract()))
            .collect();
        let raw: Vec<f64> = (0..length)
            .map(|i| {
                let th = 2.0 * PI * (cycle(i) - PPG_DELAY);
                -th.cos() + a2 * (2.0 * th + psi2).sin() + a3 * (3.0 * th).cos()
            })
            .collect();
        let (lo, hi) = raw
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let ppg: Vec<f32> = raw
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let wander = 0.05 * (2.0 * PI * wander_hz * i as f64 / rate + wander_phase).sin();
                ((v - lo) / (hi - lo) + wander) as f32
            })
            .collect();
        segments.push(Segment {
            ppg,
            abp: norm.normalize(&abp).into_iter().map(|v| v as f32).collect(),
        });
        truth.push(BpTruth { sbp, dbp });
    }
    Ok(SynthCorpus {
        set: SegmentSet::new(segments, sample_rate_hz, norm)?,
        truth,
    })
}
