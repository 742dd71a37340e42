use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AffineCoupling, InvConv1x1, ModelConfig};
use crate::autodiff::{Backend, Eager, Param, Parameterized, ShapeCounter};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor3};

/// One invertible block: channel mix, then affine coupling.
#[derive(Clone, Debug, PartialEq)]
pub struct InvertibleBlock<T> {
    pub mix: InvConv1x1<T>,
    pub coupling: AffineCoupling<T>,
}

/// The full invertible network mapping `(X, ∇X)` to `(Y, ∇Y)` and back.
#[derive(Clone, Debug, PartialEq)]
pub struct InnPar<T> {
    config: ModelConfig,
    pub blocks: Vec<InvertibleBlock<T>>,
}

/// Parameter and compute summary for one forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostReport {
    pub params: usize,
    pub conv_macs: u64,
    pub elementwise_ops: u64,
}

impl CostReport {
    pub fn total_ops(&self) -> u64 {
        self.conv_macs + self.elementwise_ops
    }
}

/// Seeded initialisation: orthonormal 1x1 weights, scaled-Gaussian kernels,
/// zero biases.
pub fn init_model<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<InnPar<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::with_capacity(config.num_blocks);
    for b in 0..config.num_blocks {
        let name = format!("block{b}");
        let mix = InvConv1x1::init(&format!("{name}.invconv"), config.channels, &mut rng)?;
        let coupling = AffineCoupling::init(&format!("{name}.acl"), config, &mut rng);
        blocks.push(InvertibleBlock { mix, coupling });
    }
    let mut model = InnPar {
        config: config.clone(),
        blocks,
    };
    model.assign_slots();
    Ok(model)
}

impl<T: Scalar> InnPar<T> {
    /// Zero coupling modules and identity channel mixes: an exact identity map.
    pub fn identity(config: &ModelConfig) -> Result<Self> {
        let mut model = init_model(config, 0)?;
        for block in &mut model.blocks {
            block.mix.set_identity();
            block.coupling.zero_();
        }
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Changes the expected input length. The layers themselves are
    /// length-agnostic.
    pub fn set_signal_length(&mut self, length: usize) -> Result<()> {
        if length == 0 {
            return Err(Error::config("model.signal_length", "must be positive"));
        }
        self.config.signal_length = length;
        Ok(())
    }

    fn check_input(&self, shape: (usize, usize, usize), op: &'static str) -> Result<()> {
        let (_, c, l) = shape;
        let mut problems = Vec::new();
        if c != self.config.channels {
            problems.push(format!("channels {c}, expected {}", self.config.channels));
        }
        if l != self.config.signal_length {
            problems.push(format!("length {l}, expected {}", self.config.signal_length));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::dim(op, problems.join(", ")))
        }
    }

    /// Forward pass on any backend.
    pub fn forward_on<B: Backend<T>>(&self, be: &B, x: &B::V) -> Result<B::V> {
        self.check_input(be.shape(x), "model_forward")?;
        let (c1, c2) = self.config.split;
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.mix.forward(be, &h)?;
            let x1 = be.slice_channels(&h, 0, c1)?;
            let x2 = be.slice_channels(&h, c1, c2)?;
            let (y1, y2) = block.coupling.forward(be, &x1, &x2)?;
            h = be.concat_channels(&y1, &y2)?;
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.forward_on(&Eager, x)
    }

    /// Block-by-block inverse in reverse order.
    pub fn inverse(&self, y: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.check_input(y.shape(), "model_inverse")?;
        let (c1, c2) = self.config.split;
        let mut h = y.clone();
        for block in self.blocks.iter().rev() {
            let y1 = h.slice_channels(0, c1)?;
            let y2 = h.slice_channels(c1, c2)?;
            let (x1, x2) = block.coupling.inverse(&Eager, &y1, &y2)?;
            h = block.mix.inverse(&x1.concat_channels(&x2)?)?;
        }
        Ok(h)
    }

    pub fn count_params(&self) -> usize {
        self.num_scalars()
    }

    /// Parameters plus multiply-accumulates of one forward pass over a single
    /// signal of `length` samples.
    pub fn count_flops(&self, length: usize) -> Result<CostReport> {
        let mut probe = self.clone();
        probe.config.signal_length = length;
        let counter = ShapeCounter::new();
        probe.forward_on(&counter, &(1, self.config.channels, length))?;
        Ok(CostReport {
            params: self.count_params(),
            conv_macs: counter.conv_macs(),
            elementwise_ops: counter.elementwise_ops(),
        })
    }

    /// Conversion to another precision.
    pub fn cast<U: Scalar>(&self) -> InnPar<U> {
        let cast_param = |p: &Param<T>| {
            let mut q = Param::new(p.name.clone(), p.value.cast::<U>());
            q.slot = p.slot;
            q
        };
        let mut out: InnPar<U> = init_model(&self.config, 0).expect("config already validated");
        for (dst, src) in out.params_mut().into_iter().zip(self.params()) {
            *dst = cast_param(src);
        }
        out
    }

    /// Largest `max |WᵀW − I|` over all channel mixes.
    pub fn max_orthonormality_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.mix.orthonormality_error())
            .fold(0.0, f64::max)
    }
}

impl<T: Scalar> Parameterized<T> for InnPar<T> {
    fn params(&self) -> Vec<&Param<T>> {
        let mut v = Vec::new();
        for b in &self.blocks {
            v.push(&b.mix.weight);
            v.extend(b.coupling.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut v = Vec::new();
        for b in &mut self.blocks {
            v.push(&mut b.mix.weight);
            v.extend(b.coupling.params_mut());
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use rand::Rng;

    fn input<T: Scalar>(batch: usize, len: usize, seed: u64) -> Tensor3<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor3::from_fn((batch, 2, len), |_, _, _| T::of(rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn identity_model_is_exact() {
        let model = InnPar::<f32>::identity(&ModelConfig::default()).unwrap();
        let x = input::<f32>(2, 625, 1);
        assert_eq!(model.forward(&x).unwrap(), x);
        assert_eq!(model.inverse(&x).unwrap(), x);
    }

    #[test]
    fn roundtrip_tiny_f64() {
        for seed in 0..5 {
            let model = init_model::<f64>(&ModelConfig::tiny(), seed).unwrap();
            let x = input::<f64>(2, 32, 10 + seed);
            let back = model.inverse(&model.forward(&x).unwrap()).unwrap();
            assert!(back.max_abs_diff(&x).unwrap() <= 1e-8);
            let fwd = model.forward(&model.inverse(&x).unwrap()).unwrap();
            assert!(fwd.max_abs_diff(&x).unwrap() <= 1e-8);
        }
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let model = init_model::<f32>(&ModelConfig::tiny(), 0).unwrap();
        let three = Tensor3::<f32>::zeros(1, 3, 32);
        let err = model.forward(&three).unwrap_err().to_string();
        assert!(err.contains("channels 3"), "{err}");
        assert!(model.inverse(&Tensor3::zeros(1, 2, 31)).is_err());
    }

    #[test]
    fn deterministic_and_batch_independent() {
        let c = ModelConfig::tiny();
        let a = init_model::<f32>(&c, 3).unwrap();
        let b = init_model::<f32>(&c, 3).unwrap();
        assert_eq!(a, b);
        let x = input::<f32>(2, 32, 4);
        let joint = a.forward(&x).unwrap();
        let parts = Tensor3::concat_batch(&[
            a.forward(&x.slice_batch(0, 1).unwrap()).unwrap(),
            a.forward(&x.slice_batch(1, 1).unwrap()).unwrap(),
        ])
        .unwrap();
        assert_eq!(joint, parts);
        assert_eq!(joint, b.forward(&x).unwrap());
    }

    #[test]
    fn tape_forward_matches_eager() {
        let model = init_model::<f64>(&ModelConfig::tiny(), 8).unwrap();
        let x = input::<f64>(1, 32, 9);
        let tape = Tape::new();
        let v = tape.input(x.clone());
        let out = model.forward_on(&tape, &v).unwrap();
        assert_eq!(*tape.value(out), model.forward(&x).unwrap());
    }

    #[test]
    fn parameter_count_of_default_config() {
        let model = init_model::<f32>(&ModelConfig::default(), 0).unwrap();
        // 12 modules of 31025 scalars plus four 2x2 mixes
        assert_eq!(model.count_params(), 12 * 31025 + 16);
        let names: std::collections::HashSet<_> = model.params().iter().map(|p| &p.name).collect();
        assert_eq!(names.len(), model.params().len());
        assert!(names.contains(&"block0.acl.h1.scale1_down.weight".to_string()));
    }

    #[test]
    fn flop_count_is_shape_arithmetic() {
        let model = init_model::<f32>(&ModelConfig::default(), 0).unwrap();
        let cost = model.count_flops(625).unwrap();
        // per module: conv MACs at lengths 628 / 314 / 157
        let per = 16 * 5 * 628 + 32 * 32 * 5 * 314 + 64 * 64 * 5 * 157 + 32 * 32 * 5 * 314 + 16 * 5 * 628;
        assert_eq!(cost.conv_macs, (12 * per + 4 * 4 * 625) as u64);
        assert!(cost.elementwise_ops > 0);
    }
}
