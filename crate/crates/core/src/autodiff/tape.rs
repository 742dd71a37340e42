//! Reverse-mode differentiation over [`Tensor3`] operations.

use std::cell::{Ref, RefCell};
use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use super::backend::Backend;
use super::{Param, Parameterized};
use crate::error::{Error, Result};
use crate::tensor::{conv, Scalar, Shape, Tensor3};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Input,
    Param(usize),
    Conv1d { x: Var, w: Var, b: Var },
    ChannelMix { x: Var, w: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Exp(Var),
    Relu(Var),
    Tanh(Var),
    Abs(Var),
    Scale(Var, T),
    PadRight(Var, usize),
    CropRight(Var, usize),
    Squeeze(Var, usize),
    Unsqueeze(Var, usize),
    SliceChannels(Var, usize),
    ConcatChannels(Var, Var),
    Diff(Var),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor3<T>,
    op: Op<T>,
}

/// Ordered record of executed operations. Values are kept so adjoints can
/// be replayed in reverse.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Parameter gradients produced by [`Tape::backward`], indexed by slot.
#[derive(Clone, Debug, Default)]
pub struct Gradients<T> {
    by_slot: Vec<Option<Tensor3<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, slot: usize) -> Option<&Tensor3<T>> {
        self.by_slot.get(slot).and_then(Option::as_ref)
    }

    /// `param.grad += dloss/dparam` for every parameter reached.
    pub fn accumulate_into<M: Parameterized<T> + ?Sized>(&self, model: &mut M) {
        for p in model.params_mut() {
            if let Some(g) = self.get(p.slot) {
                for (a, &d) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *a = *a + d;
                }
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Records a constant.
    pub fn input(&self, value: Tensor3<T>) -> Var {
        self.push(value, Op::Input)
    }

    /// Hash of the sign pattern at every `relu` and `abs` input. Two
    /// evaluations with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> u64 {
        let nodes = self.nodes.borrow();
        let mut h = DefaultHasher::new();
        for node in nodes.iter() {
            if let Op::Relu(x) | Op::Abs(x) = node.op {
                for v in nodes[x.0].value.data() {
                    h.write_u8(u8::from(*v > T::zero()) | (u8::from(*v < T::zero()) << 1));
                }
            }
        }
        h.finish()
    }

    pub fn value(&self, v: Var) -> Ref<'_, Tensor3<T>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    fn push(&self, value: Tensor3<T>, op: Op<T>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    fn unary(&self, a: &Var, f: impl FnOnce(&Tensor3<T>) -> Tensor3<T>, op: Op<T>) -> Var {
        let value = f(&self.value(*a));
        self.push(value, op)
    }

    fn try_unary(
        &self,
        a: &Var,
        f: impl FnOnce(&Tensor3<T>) -> Result<Tensor3<T>>,
        op: Op<T>,
    ) -> Result<Var> {
        let value = f(&self.value(*a))?;
        Ok(self.push(value, op))
    }

    fn binary(
        &self,
        a: &Var,
        b: &Var,
        f: impl FnOnce(&Tensor3<T>, &Tensor3<T>) -> Result<Tensor3<T>>,
        op: Op<T>,
    ) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            f(&nodes[a.0].value, &nodes[b.0].value)?
        };
        Ok(self.push(value, op))
    }

    /// Replays the tape backwards from a scalar `loss`, seeding its adjoint
    /// with `seed`. Each recorded op is visited once.
    pub fn backward(&self, loss: Var, seed: T) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let terminal = &nodes[loss.0].value;
        if terminal.len() != 1 {
            return Err(Error::Usage(format!(
                "backward from non-scalar node of shape {:?}",
                terminal.shape()
            )));
        }
        let mut adj: Vec<Option<Tensor3<T>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor3::scalar(seed));
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &nodes[idx];
            let val = |v: &Var| &nodes[v.0].value;
            match &node.op {
                Op::Input => {}
                Op::Param(slot) => {
                    if out.by_slot.len() <= *slot {
                        out.by_slot.resize(*slot + 1, None);
                    }
                    accumulate(&mut out.by_slot[*slot], g);
                }
                Op::Conv1d { x, w, b } => {
                    let k = val(w).length();
                    let (dw, db) = conv::backward_params(&g, val(x), k);
                    let dx = conv::backward_input(&g, val(w));
                    accumulate(&mut adj[x.0], dx);
                    accumulate(&mut adj[w.0], dw);
                    accumulate(&mut adj[b.0], db);
                }
                Op::ChannelMix { x, w } => {
                    let (dx, dw) = channel_mix_backward(&g, val(x), val(w));
                    accumulate(&mut adj[x.0], dx);
                    accumulate(&mut adj[w.0], dw);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj[a.0], g.clone());
                    accumulate(&mut adj[b.0], g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj[b.0], g.scale(-T::one()));
                    accumulate(&mut adj[a.0], g);
                }
                Op::Mul(a, b) => {
                    accumulate(&mut adj[a.0], zip(&g, val(b), |g, b| g * b));
                    accumulate(&mut adj[b.0], zip(&g, val(a), |g, a| g * a));
                }
                Op::Div(a, b) => {
                    // d(a/b)/db = -(a/b)/b
                    let q = &node.value;
                    let db = zip3(&g, q, val(b), |g, q, b| -g * q / b);
                    accumulate(&mut adj[a.0], zip(&g, val(b), |g, b| g / b));
                    accumulate(&mut adj[b.0], db);
                }
                Op::Exp(a) => accumulate(&mut adj[a.0], zip(&g, &node.value, |g, y| g * y)),
                Op::Relu(a) => accumulate(
                    &mut adj[a.0],
                    zip(&g, val(a), |g, x| if x > T::zero() { g } else { T::zero() }),
                ),
                Op::Tanh(a) => accumulate(
                    &mut adj[a.0],
                    zip(&g, &node.value, |g, y| g * (T::one() - y * y)),
                ),
                Op::Abs(a) => accumulate(
                    &mut adj[a.0],
                    zip(&g, val(a), |g, x| {
                        if x > T::zero() {
                            g
                        } else if x < T::zero() {
                            -g
                        } else {
                            T::zero()
                        }
                    }),
                ),
                Op::Scale(a, s) => accumulate(&mut adj[a.0], g.scale(*s)),
                Op::PadRight(a, n) => accumulate(&mut adj[a.0], pad_backward(&g, *n)),
                Op::CropRight(a, n) => accumulate(&mut adj[a.0], crop_backward(&g, *n)),
                Op::Squeeze(a, f) => accumulate(&mut adj[a.0], g.unsqueeze(*f)?),
                Op::Unsqueeze(a, f) => accumulate(&mut adj[a.0], g.squeeze(*f)?),
                Op::SliceChannels(a, start) => {
                    let da = slice_backward(&g, val(a).shape(), *start);
                    accumulate(&mut adj[a.0], da);
                }
                Op::ConcatChannels(a, b) => {
                    let ca = val(a).channels();
                    let cb = val(b).channels();
                    accumulate(&mut adj[a.0], g.slice_channels(0, ca)?);
                    accumulate(&mut adj[b.0], g.slice_channels(ca, cb)?);
                }
                Op::Diff(a) => accumulate(&mut adj[a.0], diff_backward(&g)),
                Op::Sum(a) => {
                    accumulate(&mut adj[a.0], Tensor3::full(val(a).shape(), g.data()[0]))
                }
                Op::Mean(a) => {
                    let s = val(a).shape();
                    let n = T::of((s.0 * s.1 * s.2) as f64);
                    accumulate(&mut adj[a.0], Tensor3::full(s, g.data()[0] / n));
                }
            }
        }
        Ok(out)
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor3<T>>, g: Tensor3<T>) {
    match slot {
        None => *slot = Some(g),
        Some(acc) => {
            debug_assert_eq!(acc.shape(), g.shape());
            for (a, &d) in acc.data_mut().iter_mut().zip(g.data()) {
                *a = *a + d;
            }
        }
    }
}

fn zip<T: Scalar>(a: &Tensor3<T>, b: &Tensor3<T>, f: impl Fn(T, T) -> T) -> Tensor3<T> {
    let (n0, n1, n2) = a.shape();
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor3::from_parts(n0, n1, n2, data)
}

fn zip3<T: Scalar>(
    a: &Tensor3<T>,
    b: &Tensor3<T>,
    c: &Tensor3<T>,
    f: impl Fn(T, T, T) -> T,
) -> Tensor3<T> {
    let (n0, n1, n2) = a.shape();
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c.data())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor3::from_parts(n0, n1, n2, data)
}

fn channel_mix_backward<T: Scalar>(
    g: &Tensor3<T>,
    x: &Tensor3<T>,
    w: &Tensor3<T>,
) -> (Tensor3<T>, Tensor3<T>) {
    let (batch, c, _) = x.shape();
    let wt = Tensor3::from_fn((1, c, c), |_, i, j| w.get(0, j, i));
    let dx = g.channel_mix(&wt).expect("shapes fixed at record time");
    let mut dw = vec![T::zero(); c * c];
    for b in 0..batch {
        for o in 0..c {
            let go = g.row(b, o);
            for ci in 0..c {
                let xc = x.row(b, ci);
                let dot = go.iter().zip(xc).fold(T::zero(), |acc, (&p, &q)| acc + p * q);
                dw[o * c + ci] = dw[o * c + ci] + dot;
            }
        }
    }
    (dx, Tensor3::from_parts(1, c, c, dw))
}

fn pad_backward<T: Scalar>(g: &Tensor3<T>, n: usize) -> Tensor3<T> {
    let (b, c, padded) = g.shape();
    let l = padded - n;
    let mut data = Vec::with_capacity(b * c * l);
    for row in g.data().chunks_exact(padded) {
        data.extend_from_slice(&row[..l]);
        let tail = row[l..].iter().fold(T::zero(), |acc, &v| acc + v);
        let last = data.len() - 1;
        data[last] = data[last] + tail;
    }
    Tensor3::from_parts(b, c, l, data)
}

fn crop_backward<T: Scalar>(g: &Tensor3<T>, n: usize) -> Tensor3<T> {
    let (b, c, l) = g.shape();
    let mut data = Vec::with_capacity(b * c * (l + n));
    for row in g.data().chunks_exact(l) {
        data.extend_from_slice(row);
        data.extend(std::iter::repeat_n(T::zero(), n));
    }
    Tensor3::from_parts(b, c, l + n, data)
}

fn slice_backward<T: Scalar>(g: &Tensor3<T>, full: Shape, start: usize) -> Tensor3<T> {
    let (batch, channels, l) = full;
    let count = g.channels();
    let mut out = Tensor3::zeros(batch, channels, l);
    let data = out.data_mut();
    for b in 0..batch {
        let dst = (b * channels + start) * l;
        data[dst..dst + count * l].copy_from_slice(g.sample(b));
    }
    out
}

fn diff_backward<T: Scalar>(g: &Tensor3<T>) -> Tensor3<T> {
    let (b, c, l) = g.shape();
    let mut data = vec![T::zero(); b * c * l];
    for (row, dst) in g.data().chunks_exact(l).zip(data.chunks_exact_mut(l)) {
        for i in 0..l - 1 {
            dst[i + 1] = dst[i + 1] + row[i];
            dst[i] = dst[i] - row[i];
        }
        dst[l - 1] = dst[l - 1] + row[l - 1];
        dst[l - 2] = dst[l - 2] - row[l - 1];
    }
    Tensor3::from_parts(b, c, l, data)
}

impl<T: Scalar> Backend<T> for Tape<T> {
    type V = Var;

    fn shape(&self, v: &Var) -> Shape {
        self.value(*v).shape()
    }

    fn param(&self, p: &Param<T>) -> Var {
        self.push(p.value.clone(), Op::Param(p.slot))
    }

    fn conv1d(&self, x: &Var, w: &Var, b: &Var) -> Result<Var> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[x.0]
                .value
                .conv1d(&nodes[w.0].value, Some(&nodes[b.0].value))?
        };
        Ok(self.push(
            value,
            Op::Conv1d {
                x: *x,
                w: *w,
                b: *b,
            },
        ))
    }

    fn channel_mix(&self, x: &Var, w: &Var) -> Result<Var> {
        self.binary(x, w, |x, w| x.channel_mix(w), Op::ChannelMix { x: *x, w: *w })
    }

    fn add(&self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, |a, b| a.add(b), Op::Add(*a, *b))
    }

    fn sub(&self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, |a, b| a.sub(b), Op::Sub(*a, *b))
    }

    fn mul(&self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, |a, b| a.mul(b), Op::Mul(*a, *b))
    }

    fn div(&self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, |a, b| a.div(b), Op::Div(*a, *b))
    }

    fn exp(&self, a: &Var) -> Var {
        self.unary(a, Tensor3::exp, Op::Exp(*a))
    }

    fn relu(&self, a: &Var) -> Var {
        self.unary(a, Tensor3::relu, Op::Relu(*a))
    }

    fn tanh(&self, a: &Var) -> Var {
        self.unary(a, Tensor3::tanh, Op::Tanh(*a))
    }

    fn abs(&self, a: &Var) -> Var {
        self.unary(a, Tensor3::abs, Op::Abs(*a))
    }

    fn scale(&self, a: &Var, s: T) -> Var {
        self.unary(a, |t| t.scale(s), Op::Scale(*a, s))
    }

    fn pad_replicate_right(&self, a: &Var, n: usize) -> Var {
        self.unary(a, |t| t.pad_replicate_right(n), Op::PadRight(*a, n))
    }

    fn crop_right(&self, a: &Var, n: usize) -> Result<Var> {
        self.try_unary(a, |t| t.crop_right(n), Op::CropRight(*a, n))
    }

    fn squeeze(&self, a: &Var, factor: usize) -> Result<Var> {
        self.try_unary(a, |t| t.squeeze(factor), Op::Squeeze(*a, factor))
    }

    fn unsqueeze(&self, a: &Var, factor: usize) -> Result<Var> {
        self.try_unary(a, |t| t.unsqueeze(factor), Op::Unsqueeze(*a, factor))
    }

    fn slice_channels(&self, a: &Var, start: usize, count: usize) -> Result<Var> {
        self.try_unary(
            a,
            |t| t.slice_channels(start, count),
            Op::SliceChannels(*a, start),
        )
    }

    fn concat_channels(&self, a: &Var, b: &Var) -> Result<Var> {
        self.binary(a, b, |a, b| a.concat_channels(b), Op::ConcatChannels(*a, *b))
    }

    fn diff(&self, a: &Var) -> Result<Var> {
        self.try_unary(a, Tensor3::diff, Op::Diff(*a))
    }

    fn sum(&self, a: &Var) -> Var {
        self.unary(a, |t| Tensor3::scalar(t.sum()), Op::Sum(*a))
    }

    fn mean(&self, a: &Var) -> Var {
        self.unary(a, |t| Tensor3::scalar(t.mean()), Op::Mean(*a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::ParamList;

    fn list(values: &[f64]) -> ParamList<f64> {
        ParamList::new(vec![Param::new(
            "w",
            Tensor3::from_signal(values).unwrap(),
        )])
    }

    #[test]
    fn square_sum_gradient() {
        let mut ps = list(&[3.0]);
        let tape = Tape::new();
        let w = tape.param(&ps.items[0]);
        let sq = tape.mul(&w, &w).unwrap();
        let loss = tape.sum(&sq);
        tape.backward(loss, 1.0).unwrap().accumulate_into(&mut ps);
        assert_eq!(ps.items[0].grad.data(), &[6.0]);
    }

    #[test]
    fn relu_subgradient_is_zero_at_and_below_zero() {
        let mut ps = list(&[-1.0, 2.0, 0.0]);
        let tape = Tape::new();
        let w = tape.param(&ps.items[0]);
        let r = tape.relu(&w);
        let loss = tape.sum(&r);
        tape.backward(loss, 1.0).unwrap().accumulate_into(&mut ps);
        assert_eq!(ps.items[0].grad.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn reuse_accumulates() {
        // loss = sum(w) + sum(3 w) -> grad 4, and a second backward adds again
        let mut ps = list(&[1.0, 2.0]);
        let tape = Tape::new();
        let w = tape.param(&ps.items[0]);
        let a = tape.sum(&w);
        let s = tape.scale(&w, 3.0);
        let b = tape.sum(&s);
        let loss = tape.add(&a, &b).unwrap();
        let g = tape.backward(loss, 1.0).unwrap();
        g.accumulate_into(&mut ps);
        g.accumulate_into(&mut ps);
        assert_eq!(ps.items[0].grad.data(), &[8.0, 8.0]);
    }

    #[test]
    fn non_scalar_terminal_is_usage_error() {
        let ps = list(&[1.0, 2.0]);
        let tape = Tape::new();
        let w = tape.param(&ps.items[0]);
        assert!(matches!(tape.backward(w, 1.0), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_is_deterministic() {
        let ps = list(&[0.3, -1.2, 2.5, 0.7]);
        let tape = Tape::new();
        let w = tape.param(&ps.items[0]);
        let e = tape.exp(&w);
        let t = tape.tanh(&e);
        let d = tape.diff(&t).unwrap();
        let a = tape.abs(&d);
        let loss = tape.mean(&a);
        let g1 = tape.backward(loss, 1.0).unwrap();
        let g2 = tape.backward(loss, 1.0).unwrap();
        assert_eq!(g1.get(0), g2.get(0));
    }
}
