//! Multi-scale convolution module.
//!
//! U-shaped: a conv + ReLU per scale on the way down with a lossless squeeze
//! between scales, then unsqueeze + additive skip on the way up, with one
//! conv + ReLU at every intermediate scale and a final linear conv at full
//! resolution. With filters `[16, 32, 64]` and `C_in -> C_out`:
//!
//! ```text
//! pad -> conv(C_in,16)+relu ─────────────────────────────┐ skip1
//!        squeeze -> conv(32,32)+relu ──────────────┐ skip2 │
//!                   squeeze -> conv(64,64)+relu    │       │
//!                   unsqueeze -> (+ skip2) -> conv(32,32)+relu
//!        unsqueeze -> (+ skip1) -> conv(16,C_out) -> crop
//! ```
//!
//! The input is replicate-padded on the right to a multiple of
//! `squeeze_factor^(scales - 1)` and cropped back afterwards.

use rand::Rng;
use rand_distr::StandardNormal;

use super::ModelConfig;
use crate::autodiff::{Backend, Param};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor3};

/// Same-padded convolution with bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
}

impl<T: Scalar> Conv1d<T> {
    /// Gaussian kernel with std `sqrt(2 / (in_ch * k))`, zero bias.
    pub fn init(name: &str, in_ch: usize, out_ch: usize, k: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / (in_ch * k) as f64).sqrt();
        let weight = Tensor3::from_fn((out_ch, in_ch, k), |_, _, _| {
            let z: f64 = rng.sample(StandardNormal);
            T::of(z * std)
        });
        Self {
            weight: Param::new(format!("{name}.weight"), weight),
            bias: Param::new(format!("{name}.bias"), Tensor3::zeros(1, 1, out_ch)),
        }
    }

    pub fn forward<B: Backend<T>>(&self, be: &B, x: &B::V) -> Result<B::V> {
        let w = be.param(&self.weight);
        let b = be.param(&self.bias);
        be.conv1d(x, &w, &b)
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn zero_(&mut self) {
        self.weight.value.data_mut().fill(T::zero());
        self.bias.value.data_mut().fill(T::zero());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mscm<T> {
    /// One conv per scale, finest first.
    pub down: Vec<Conv1d<T>>,
    /// Convs at scales `2..scales-1` on the way up, finest first.
    pub up: Vec<Conv1d<T>>,
    pub out: Conv1d<T>,
    factor: usize,
}

impl<T: Scalar> Mscm<T> {
    pub fn init(
        name: &str,
        in_ch: usize,
        out_ch: usize,
        config: &ModelConfig,
        rng: &mut impl Rng,
    ) -> Self {
        let f = &config.mscm_filters;
        let k = config.kernel;
        let q = config.squeeze_factor;
        let mut down = Vec::with_capacity(config.scales);
        for s in 0..config.scales {
            let cin = if s == 0 { in_ch } else { f[s - 1] * q };
            down.push(Conv1d::init(&format!("{name}.scale{}_down", s + 1), cin, f[s], k, rng));
        }
        let up = (1..config.scales.saturating_sub(1))
            .map(|s| Conv1d::init(&format!("{name}.scale{}_up", s + 1), f[s], f[s], k, rng))
            .collect();
        let mut out = Conv1d::init(&format!("{name}.out"), f[0], out_ch, k, rng);
        out.weight.value = out.weight.value.scale(T::of(config.out_init_gain));
        Self {
            down,
            up,
            out,
            factor: q,
        }
    }

    pub fn forward<B: Backend<T>>(&self, be: &B, x: &B::V) -> Result<B::V> {
        let length = be.shape(x).2;
        let multiple = self.factor.pow(self.down.len().saturating_sub(1) as u32);
        let pad = (multiple - length % multiple) % multiple;

        let mut h = be.pad_replicate_right(x, pad);
        let mut skips = Vec::with_capacity(self.down.len());
        for (s, conv) in self.down.iter().enumerate() {
            if s > 0 {
                h = be.squeeze(&h, self.factor)?;
            }
            h = be.relu(&conv.forward(be, &h)?);
            skips.push(h.clone());
        }
        let mut u = skips.pop().expect("at least one scale");
        for s in (1..self.down.len()).rev() {
            u = be.unsqueeze(&u, self.factor)?;
            u = be.add(&u, &skips[s - 1])?;
            if s > 1 {
                u = be.relu(&self.up[s - 2].forward(be, &u)?);
            }
        }
        let y = self.out.forward(be, &u)?;
        if pad == 0 {
            Ok(y)
        } else {
            be.crop_right(&y, pad)
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        for c in self.down.iter().chain(&self.up).chain(std::iter::once(&self.out)) {
            v.extend(c.params());
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        for c in self
            .down
            .iter_mut()
            .chain(self.up.iter_mut())
            .chain(std::iter::once(&mut self.out))
        {
            v.extend(c.params_mut());
        }
        v
    }

    /// Zeroes every weight and bias, making the module output identically 0.
    pub fn zero_(&mut self) {
        for c in self
            .down
            .iter_mut()
            .chain(self.up.iter_mut())
            .chain(std::iter::once(&mut self.out))
        {
            c.zero_();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Eager, ShapeCounter};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn module(config: &ModelConfig, seed: u64) -> Mscm<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mscm::init("h", 1, 1, config, &mut rng)
    }

    fn signal(len: usize, seed: u64) -> Tensor3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn((1, 1, len), |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mut m = module(&ModelConfig::default(), 1);
        m.zero_();
        let y = m.forward(&Eager, &signal(625, 2)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn keeps_length_625() {
        let m = module(&ModelConfig::default(), 1);
        let y = m.forward(&Eager, &signal(625, 2)).unwrap();
        assert_eq!(y.shape(), (1, 1, 625));
        // the padded trunk runs at 628
        let counter = ShapeCounter::new();
        let s = m.forward(&counter, &(1, 1, 625)).unwrap();
        assert_eq!(s, (1, 1, 625));
    }

    #[test]
    fn parameter_layout() {
        let m = module(&ModelConfig::default(), 1);
        let names: Vec<_> = m.params().iter().map(|p| p.name.clone()).collect();
        assert_eq!(names[0], "h.scale1_down.weight");
        assert!(names.contains(&"h.scale2_up.bias".to_string()));
        assert_eq!(names.last().unwrap(), "h.out.bias");
        let shapes: Vec<_> = m.params().iter().map(|p| p.value.shape()).collect();
        assert_eq!(
            shapes,
            vec![
                (16, 1, 5),
                (1, 1, 16),
                (32, 32, 5),
                (1, 1, 32),
                (64, 64, 5),
                (1, 1, 64),
                (32, 32, 5),
                (1, 1, 32),
                (1, 16, 5),
                (1, 1, 1),
            ]
        );
        let total: usize = m.params().iter().map(|p| p.numel()).sum();
        assert_eq!(total, 96 + 5152 + 20544 + 5152 + 81);
    }

    #[test]
    fn single_scale_has_no_rescaling() {
        let c = ModelConfig::default().single_scale();
        let m = module(&c, 4);
        assert_eq!(m.down.len(), 1);
        assert!(m.up.is_empty());
        let y = m.forward(&Eager, &signal(37, 5)).unwrap();
        assert_eq!(y.shape(), (1, 1, 37));
    }

    #[test]
    fn perturbing_one_sample_changes_output() {
        let m = module(&ModelConfig::default(), 9);
        let x = signal(625, 10);
        let base = m.forward(&Eager, &x).unwrap();
        for pos in [0usize, 311, 624] {
            let mut x2 = x.clone();
            x2.data_mut()[pos] += 0.5;
            let y = m.forward(&Eager, &x2).unwrap();
            assert!(y.max_abs_diff(&base).unwrap() > 0.0, "position {pos}");
        }
    }
}
