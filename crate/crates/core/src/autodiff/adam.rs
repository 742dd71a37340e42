use serde::{Deserialize, Serialize};

use super::Parameterized;
use crate::tensor::{Scalar, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept per parameter slot.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Tensor3<T>>,
    v: Vec<Tensor3<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update from the accumulated gradients, which are then zeroed.
    pub fn step<M: Parameterized<T> + ?Sized>(&mut self, model: &mut M) {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (one_b1, one_b2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
        let (lr_t, bc1_t, bc2_t, eps_t) = (T::of(lr), T::of(bc1), T::of(bc2), T::of(eps));

        let mut params = model.params_mut();
        if self.m.len() != params.len() {
            self.m = params
                .iter()
                .map(|p| {
                    let (a, b, c) = p.value.shape();
                    Tensor3::zeros(a, b, c)
                })
                .collect();
            self.v = self.m.clone();
        }
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = p.grad.data();
            for (j, theta) in p.value.data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                let m_hat = m[j] / bc1_t;
                let v_hat = v[j] / bc2_t;
                *theta = *theta - lr_t * m_hat / (v_hat.sqrt() + eps_t);
            }
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Param, ParamList};

    fn one(theta: f64, grad: f64) -> ParamList<f64> {
        let mut p = Param::new("w", Tensor3::from_signal(&[theta]).unwrap());
        p.grad.data_mut()[0] = grad;
        ParamList::new(vec![p])
    }

    #[test]
    fn first_step_hand_value() {
        let mut ps = one(0.0, 1.0);
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step(&mut ps);
        // m_hat = v_hat = 1 at t = 1, so theta = -lr / (1 + eps)
        let expected = -1e-4 / (1.0 + 1e-8);
        assert!((ps.items[0].value.data()[0] - expected).abs() < 1e-18);
        assert!((ps.items[0].value.data()[0] + 9.99999995e-5).abs() < 1e-12);
        assert_eq!(ps.items[0].grad.data(), &[0.0]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = one(0.25, 0.0);
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step(&mut ps);
        adam.step(&mut ps);
        assert_eq!(ps.items[0].value.data(), &[0.25]);
    }

    #[test]
    fn constant_gradient_descends_monotonically() {
        let mut ps = one(0.0, 1.0);
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step(&mut ps);
        let after_one = ps.items[0].value.data()[0];
        ps.items[0].grad.data_mut()[0] = 1.0;
        adam.step(&mut ps);
        let after_two = ps.items[0].value.data()[0];
        assert!(after_one < 0.0 && after_two < after_one);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut ps = one(1.5, 3.0);
        let mut adam = AdamState::new(AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        });
        adam.step(&mut ps);
        assert_eq!(ps.items[0].value.data(), &[1.5]);
    }
}
