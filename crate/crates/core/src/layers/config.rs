use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the invertible network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Invertible blocks, each a 1x1 convolution followed by a coupling layer.
    pub num_blocks: usize,
    /// Model channels: the signal and its gradient.
    pub channels: usize,
    /// Channel split `(c1, c2)` seen by each coupling layer.
    pub split: (usize, usize),
    /// Conv filters per scale inside each multi-scale module.
    pub mscm_filters: Vec<usize>,
    pub kernel: usize,
    pub squeeze_factor: usize,
    pub scales: usize,
    /// Soft clamp `c` on the coupling log-scale, `s = c * tanh(h / c)`.
    /// `None` uses the raw `exp(h)`.
    pub clamp_c: Option<f64>,
    /// Multiplier on the init std of each module's final convolution. Small
    /// values start every coupling near the identity.
    pub out_init_gain: f64,
    pub signal_length: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_blocks: 4,
            channels: 2,
            split: (1, 1),
            mscm_filters: vec![16, 32, 64],
            kernel: 5,
            squeeze_factor: 2,
            scales: 3,
            clamp_c: Some(2.0),
            out_init_gain: 0.1,
            signal_length: 625,
        }
    }
}

impl ModelConfig {
    /// The small configuration used for gradient audits.
    pub fn tiny() -> Self {
        Self {
            num_blocks: 2,
            mscm_filters: vec![4, 8, 16],
            signal_length: 32,
            ..Self::default()
        }
    }

    /// Single-scale multi-scale modules: no squeeze or unsqueeze, first-scale
    /// filters only.
    pub fn single_scale(&self) -> Self {
        Self {
            scales: 1,
            mscm_filters: vec![self.mscm_filters.first().copied().unwrap_or(16)],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_blocks", self.num_blocks),
            ("channels", self.channels),
            ("kernel", self.kernel),
            ("squeeze_factor", self.squeeze_factor),
            ("scales", self.scales),
            ("signal_length", self.signal_length),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("model.{field}"), "must be positive"));
            }
        }
        if self.split.0 == 0 || self.split.1 == 0 || self.split.0 + self.split.1 != self.channels {
            return Err(Error::config(
                "model.split",
                format!(
                    "({}, {}) must be two positive parts summing to channels {}",
                    self.split.0, self.split.1, self.channels
                ),
            ));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::config("model.kernel", format!("{} is not odd", self.kernel)));
        }
        if self.mscm_filters.len() != self.scales {
            return Err(Error::config(
                "model.mscm_filters",
                format!(
                    "has {} entries but scales is {}",
                    self.mscm_filters.len(),
                    self.scales
                ),
            ));
        }
        if self.mscm_filters.contains(&0) {
            return Err(Error::config("model.mscm_filters", "entries must be positive"));
        }
        // Unsqueezing scale k must land on the channel count of scale k - 1
        // for the additive skip.
        for k in 1..self.scales {
            let want = self.mscm_filters[k - 1] * self.squeeze_factor;
            if self.mscm_filters[k] != want {
                return Err(Error::config(
                    "model.mscm_filters",
                    format!(
                        "scale {} has {} filters, expected {want} (= previous x squeeze_factor)",
                        k + 1,
                        self.mscm_filters[k]
                    ),
                ));
            }
        }
        if !(self.out_init_gain.is_finite() && self.out_init_gain >= 0.0) {
            return Err(Error::config(
                "model.out_init_gain",
                format!("{} must be finite and >= 0", self.out_init_gain),
            ));
        }
        if let Some(c) = self.clamp_c {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::config("model.clamp_c", format!("{c} must be positive")));
            }
        }
        Ok(())
    }

    /// Length multiple required by the squeeze chain.
    pub fn length_multiple(&self) -> usize {
        self.squeeze_factor.pow(self.scales.saturating_sub(1) as u32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_setup() {
        let c = ModelConfig::default();
        assert_eq!(c.num_blocks, 4);
        assert_eq!(c.mscm_filters, vec![16, 32, 64]);
        assert_eq!(c.kernel, 5);
        assert_eq!(c.signal_length, 625);
        c.validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
        ModelConfig::default().single_scale().validate().unwrap();
    }

    #[test]
    fn rejects_inconsistent_fields() {
        let bad = [
            ModelConfig { kernel: 4, ..ModelConfig::default() },
            ModelConfig { split: (2, 1), ..ModelConfig::default() },
            ModelConfig { mscm_filters: vec![16, 32], ..ModelConfig::default() },
            ModelConfig { mscm_filters: vec![16, 30, 64], ..ModelConfig::default() },
            ModelConfig { clamp_c: Some(-1.0), ..ModelConfig::default() },
            ModelConfig { num_blocks: 0, ..ModelConfig::default() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(Error::Config { .. })), "{c:?}");
        }
    }

    #[test]
    fn padded_length_for_625() {
        let c = ModelConfig::default();
        let m = c.length_multiple();
        assert_eq!(m, 4);
        assert_eq!(625usize.div_ceil(m) * m, 628);
    }
}
