use crate::tensor::{Scalar, Tensor3};

/// A named learnable tensor with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor3<T>,
    pub grad: Tensor3<T>,
    /// Position in the owning model's parameter order. Tapes report
    /// gradients by slot.
    pub(crate) slot: usize,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor3<T>) -> Self {
        let (b, c, l) = value.shape();
        Self {
            name: name.into(),
            grad: Tensor3::zeros(b, c, l),
            value,
            slot: usize::MAX,
        }
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(T::zero());
    }
}

/// Anything that owns an ordered, uniquely named set of [`Param`]s.
pub trait Parameterized<T: Scalar> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    /// Numbers parameters in `params()` order. Call after construction.
    fn assign_slots(&mut self) {
        for (i, p) in self.params_mut().into_iter().enumerate() {
            p.slot = i;
        }
    }

    fn num_scalars(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}

/// A bare list of parameters, handy for small problems and tests.
#[derive(Clone, Debug, Default)]
pub struct ParamList<T> {
    pub items: Vec<Param<T>>,
}

impl<T: Scalar> ParamList<T> {
    pub fn new(items: Vec<Param<T>>) -> Self {
        let mut list = Self { items };
        list.assign_slots();
        list
    }
}

impl<T: Scalar> Parameterized<T> for ParamList<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.items.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.items.iter_mut().collect()
    }
}
