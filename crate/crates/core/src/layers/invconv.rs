use rand::Rng;
use rand_distr::StandardNormal;

use super::linalg;
use crate::autodiff::{Backend, Param};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor3};

/// Invertible 1x1 convolution: a learnable per-position channel mix.
#[derive(Clone, Debug, PartialEq)]
pub struct InvConv1x1<T> {
    /// `(1, C, C)`, row `o` holds the mixing weights of output channel `o`.
    pub weight: Param<T>,
}

impl<T: Scalar> InvConv1x1<T> {
    /// Orthonormal init: Q factor of a seeded Gaussian matrix.
    pub fn init(name: &str, channels: usize, rng: &mut impl Rng) -> Result<Self> {
        let q = loop {
            let g: Vec<f64> = (0..channels * channels)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            // A singular Gaussian draw has probability zero; redraw if it happens.
            if let Ok(q) = linalg::orthonormalize(&g, channels) {
                break q;
            }
        };
        let w = Tensor3::new(1, channels, channels, q.into_iter().map(T::of).collect())?;
        Ok(Self {
            weight: Param::new(format!("{name}.weight"), w),
        })
    }

    pub fn channels(&self) -> usize {
        self.weight.value.channels()
    }

    pub fn set_identity(&mut self) {
        let c = self.channels();
        self.weight.value = Tensor3::from_fn((1, c, c), |_, i, j| if i == j { T::one() } else { T::zero() });
    }

    fn weight_f64(&self) -> Vec<f64> {
        self.weight.value.data().iter().map(|v| v.as_f64()).collect()
    }

    pub fn determinant(&self) -> f64 {
        linalg::determinant(&self.weight_f64(), self.channels())
    }

    /// `max |WᵀW − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        linalg::orthonormality_error(&self.weight_f64(), self.channels())
    }

    pub fn forward<B: Backend<T>>(&self, be: &B, x: &B::V) -> Result<B::V> {
        let w = be.param(&self.weight);
        be.channel_mix(x, &w)
    }

    /// Applies `W⁻¹`, recomputed on every call.
    pub fn inverse(&self, y: &Tensor3<T>) -> Result<Tensor3<T>> {
        let c = self.channels();
        let (inv, _) = linalg::invert(&self.weight_f64(), c)?;
        let w_inv = Tensor3::from_parts(1, c, c, inv.into_iter().map(T::of).collect());
        y.channel_mix(&w_inv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Eager;
    use crate::error::Error;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn x() -> Tensor3<f64> {
        Tensor3::new(2, 2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, -1.0, -2.0, -3.0, 0.5, 0.25, 0.0])
            .unwrap()
    }

    #[test]
    fn identity_and_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = InvConv1x1::<f64>::init("ic", 2, &mut rng).unwrap();
        layer.set_identity();
        assert_eq!(layer.forward(&Eager, &x()).unwrap(), x());
        layer.weight.value = Tensor3::new(1, 2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let y = layer.forward(&Eager, &x()).unwrap();
        assert_eq!(y.row(0, 0), x().row(0, 1));
        assert_eq!(y.row(1, 1), x().row(1, 0));
    }

    #[test]
    fn init_is_orthonormal_and_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for c in [2usize, 3, 4] {
            let layer = InvConv1x1::<f32>::init("ic", c, &mut rng).unwrap();
            assert!(layer.orthonormality_error() <= 1e-6);
            let input = Tensor3::from_fn((2, c, 17), |b, ch, i| ((b * 31 + ch * 7 + i) % 11) as f32 * 0.3 - 1.5);
            let y = layer.forward(&Eager, &input).unwrap();
            let back = layer.inverse(&y).unwrap();
            assert!(back.max_abs_diff(&input).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn singular_weight_is_rejected_on_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut layer = InvConv1x1::<f64>::init("ic", 2, &mut rng).unwrap();
        layer.weight.value = Tensor3::new(1, 2, 2, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(layer.inverse(&x()), Err(Error::Numeric(_))));
    }
}
