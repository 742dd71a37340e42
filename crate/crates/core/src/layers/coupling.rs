//! Affine coupling layer.
//!
//! Forward:
//! `y1 = x1 + H1(x2)`, `y2 = x2 ⊙ exp(s(y1)) + H3(y1)`
//!
//! Inverse:
//! `x2 = (y2 − H3(y1)) ⊘ exp(s(y1))`, `x1 = y1 − H1(x2)`
//!
//! with `s(y1) = c · tanh(H2(y1) / c)` when a clamp `c` is configured,
//! otherwise `H2(y1)`. Both directions recompute `s` from `y1`, so the clamp
//! does not affect invertibility.

use rand::Rng;

use super::{ModelConfig, Mscm};
use crate::autodiff::{Backend, Param};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct AffineCoupling<T> {
    /// `c2 -> c1`
    pub h1: Mscm<T>,
    /// `c1 -> c2`, log-scale
    pub h2: Mscm<T>,
    /// `c1 -> c2`, shift
    pub h3: Mscm<T>,
    pub split: (usize, usize),
    pub clamp_c: Option<f64>,
}

impl<T: Scalar> AffineCoupling<T> {
    pub fn init(name: &str, config: &ModelConfig, rng: &mut impl Rng) -> Self {
        let (c1, c2) = config.split;
        Self {
            h1: Mscm::init(&format!("{name}.h1"), c2, c1, config, rng),
            h2: Mscm::init(&format!("{name}.h2"), c1, c2, config, rng),
            h3: Mscm::init(&format!("{name}.h3"), c1, c2, config, rng),
            split: config.split,
            clamp_c: config.clamp_c,
        }
    }

    fn check<B: Backend<T>>(&self, be: &B, a: &B::V, b: &B::V, op: &'static str) -> Result<()> {
        let (sa, sb) = (be.shape(a), be.shape(b));
        let mut problems = Vec::new();
        if sa.1 != self.split.0 {
            problems.push(format!("first part has {} channels, expected {}", sa.1, self.split.0));
        }
        if sb.1 != self.split.1 {
            problems.push(format!("second part has {} channels, expected {}", sb.1, self.split.1));
        }
        if sa.0 != sb.0 {
            problems.push(format!("batch {} vs {}", sa.0, sb.0));
        }
        if sa.2 != sb.2 {
            problems.push(format!("length {} vs {}", sa.2, sb.2));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::dim(op, problems.join(", ")))
        }
    }

    fn log_scale<B: Backend<T>>(&self, be: &B, y1: &B::V) -> Result<B::V> {
        let h = self.h2.forward(be, y1)?;
        Ok(match self.clamp_c {
            Some(c) => {
                let inner = be.tanh(&be.scale(&h, T::of(1.0 / c)));
                be.scale(&inner, T::of(c))
            }
            None => h,
        })
    }

    pub fn forward<B: Backend<T>>(&self, be: &B, x1: &B::V, x2: &B::V) -> Result<(B::V, B::V)> {
        self.check(be, x1, x2, "acl_forward")?;
        let y1 = be.add(x1, &self.h1.forward(be, x2)?)?;
        let scale = be.exp(&self.log_scale(be, &y1)?);
        let shift = self.h3.forward(be, &y1)?;
        let y2 = be.add(&be.mul(x2, &scale)?, &shift)?;
        Ok((y1, y2))
    }

    pub fn inverse<B: Backend<T>>(&self, be: &B, y1: &B::V, y2: &B::V) -> Result<(B::V, B::V)> {
        self.check(be, y1, y2, "acl_inverse")?;
        let scale = be.exp(&self.log_scale(be, y1)?);
        let shift = self.h3.forward(be, y1)?;
        let x2 = be.div(&be.sub(y2, &shift)?, &scale)?;
        let x1 = be.sub(y1, &self.h1.forward(be, &x2)?)?;
        Ok((x1, x2))
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut v = self.h1.params();
        v.extend(self.h2.params());
        v.extend(self.h3.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = self.h1.params_mut();
        v.extend(self.h2.params_mut());
        v.extend(self.h3.params_mut());
        v
    }

    pub fn zero_(&mut self) {
        self.h1.zero_();
        self.h2.zero_();
        self.h3.zero_();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Eager;
    use crate::tensor::Tensor3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer<T: Scalar>(seed: u64) -> AffineCoupling<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AffineCoupling::init("acl", &ModelConfig::tiny(), &mut rng)
    }

    fn random<T: Scalar>(len: usize, rng: &mut ChaCha8Rng) -> Tensor3<T> {
        Tensor3::from_fn((2, 1, len), |_, _, _| T::of(rng.gen_range(-1.0..1.0)))
    }

    /// Makes an MSCM emit the constant `v`: everything zero except the
    /// output bias.
    fn constant(m: &mut Mscm<f64>, v: f64) {
        m.zero_();
        m.out.bias.value.data_mut().fill(v);
    }

    #[test]
    fn zero_modules_are_identity() {
        let mut acl = layer::<f64>(1);
        acl.zero_();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x1, x2) = (random::<f64>(32, &mut rng), random::<f64>(32, &mut rng));
        let (y1, y2) = acl.forward(&Eager, &x1, &x2).unwrap();
        assert_eq!((&y1, &y2), (&x1, &x2));
        let (a, b) = acl.inverse(&Eager, &y1, &y2).unwrap();
        assert_eq!((a, b), (x1, x2));
    }

    #[test]
    fn constant_stub_hand_values() {
        let mut acl = layer::<f64>(1);
        constant(&mut acl.h1, 0.5);
        constant(&mut acl.h2, 0.0);
        constant(&mut acl.h3, 1.0);
        let x1 = Tensor3::from_signal(&[1.0]).unwrap();
        let x2 = Tensor3::from_signal(&[2.0]).unwrap();
        let (y1, y2) = acl.forward(&Eager, &x1, &x2).unwrap();
        assert_eq!(y1.data(), &[1.5]);
        assert_eq!(y2.data(), &[3.0]);
        let (a, b) = acl.inverse(&Eager, &y1, &y2).unwrap();
        assert_eq!(a.data(), &[1.0]);
        assert_eq!(b.data(), &[2.0]);
    }

    #[test]
    fn roundtrip_both_directions() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let acl = layer::<f64>(seed);
            let (x1, x2) = (random::<f64>(32, &mut rng), random::<f64>(32, &mut rng));
            let (y1, y2) = acl.forward(&Eager, &x1, &x2).unwrap();
            let (a, b) = acl.inverse(&Eager, &y1, &y2).unwrap();
            assert!(a.max_abs_diff(&x1).unwrap() <= 1e-10);
            assert!(b.max_abs_diff(&x2).unwrap() <= 1e-10);
            let (p, q) = acl.inverse(&Eager, &x1, &x2).unwrap();
            let (r, s) = acl.forward(&Eager, &p, &q).unwrap();
            assert!(r.max_abs_diff(&x1).unwrap() <= 1e-10);
            assert!(s.max_abs_diff(&x2).unwrap() <= 1e-10);

            let acl32 = layer::<f32>(seed);
            let (x1, x2) = (x1.cast::<f32>(), x2.cast::<f32>());
            let (y1, y2) = acl32.forward(&Eager, &x1, &x2).unwrap();
            let (a, b) = acl32.inverse(&Eager, &y1, &y2).unwrap();
            assert!(a.max_abs_diff(&x1).unwrap() <= 1e-4);
            assert!(b.max_abs_diff(&x2).unwrap() <= 1e-4);
        }
    }

    #[test]
    fn mismatched_parts_are_dimension_errors() {
        let acl = layer::<f64>(1);
        let a = Tensor3::<f64>::zeros(1, 1, 32);
        let b = Tensor3::<f64>::zeros(1, 1, 16);
        let err = acl.forward(&Eager, &a, &b).unwrap_err();
        assert!(err.to_string().contains("length 32 vs 16"), "{err}");
        let two = Tensor3::<f64>::zeros(1, 2, 32);
        assert!(acl.inverse(&Eager, &two, &a).is_err());
    }
}
