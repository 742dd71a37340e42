//! One set of layer definitions, three ways to run them.
//!
//! Layers are written once against [`Backend`]. [`Eager`] evaluates tensors
//! directly (inference and inverse passes), [`Tape`](super::Tape) records a
//! differentiable graph, and [`ShapeCounter`] propagates shapes only while
//! tallying multiply-accumulates.

use std::cell::Cell;

use super::Param;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Shape, Tensor3};

pub trait Backend<T: Scalar> {
    type V: Clone;

    fn shape(&self, v: &Self::V) -> Shape;
    fn param(&self, p: &Param<T>) -> Self::V;

    /// `bias` holds `out_ch` elements, shaped `(1, 1, out_ch)`.
    fn conv1d(&self, x: &Self::V, weight: &Self::V, bias: &Self::V) -> Result<Self::V>;
    fn channel_mix(&self, x: &Self::V, weight: &Self::V) -> Result<Self::V>;

    fn add(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn sub(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn mul(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn div(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn exp(&self, a: &Self::V) -> Self::V;
    fn relu(&self, a: &Self::V) -> Self::V;
    fn tanh(&self, a: &Self::V) -> Self::V;
    fn abs(&self, a: &Self::V) -> Self::V;
    fn scale(&self, a: &Self::V, s: T) -> Self::V;

    fn pad_replicate_right(&self, a: &Self::V, n: usize) -> Self::V;
    fn crop_right(&self, a: &Self::V, n: usize) -> Result<Self::V>;
    fn squeeze(&self, a: &Self::V, factor: usize) -> Result<Self::V>;
    fn unsqueeze(&self, a: &Self::V, factor: usize) -> Result<Self::V>;
    fn slice_channels(&self, a: &Self::V, start: usize, count: usize) -> Result<Self::V>;
    fn concat_channels(&self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn diff(&self, a: &Self::V) -> Result<Self::V>;

    /// Sum of all elements, as a `(1, 1, 1)` value.
    fn sum(&self, a: &Self::V) -> Self::V;
    /// Mean of all elements, as a `(1, 1, 1)` value.
    fn mean(&self, a: &Self::V) -> Self::V;
}

/// Direct evaluation with no recording.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

impl<T: Scalar> Backend<T> for Eager {
    type V = Tensor3<T>;

    fn shape(&self, v: &Tensor3<T>) -> Shape {
        v.shape()
    }

    fn param(&self, p: &Param<T>) -> Tensor3<T> {
        p.value.clone()
    }

    fn conv1d(&self, x: &Tensor3<T>, w: &Tensor3<T>, b: &Tensor3<T>) -> Result<Tensor3<T>> {
        x.conv1d(w, Some(b))
    }

    fn channel_mix(&self, x: &Tensor3<T>, w: &Tensor3<T>) -> Result<Tensor3<T>> {
        x.channel_mix(w)
    }

    fn add(&self, a: &Tensor3<T>, b: &Tensor3<T>) -> Result<Tensor3<T>> {
        a.add(b)
    }

    fn sub(&self, a: &Tensor3<T>, b: &Tensor3<T>) -> Result<Tensor3<T>> {
        a.sub(b)
    }

    fn mul(&self, a: &Tensor3<T>, b: &Tensor3<T>) -> Result<Tensor3<T>> {
        a.mul(b)
    }

    fn div(&self, a: &Tensor3<T>, b: &Tensor3<T>) -> Result<Tensor3<T>> {
        a.div(b)
    }

    fn exp(&self, a: &Tensor3<T>) -> Tensor3<T> {
        a.exp()
    }

    fn relu(&self, a: &Tensor3<T>) -> Tensor3<T> {
        a.relu()
    }

    fn tanh(&self, a: &Tensor3<T>) -> Tensor3<T> {
        a.tanh()
    }

    fn abs(&self, a: &Tensor3<T>) -> Tensor3<T> {
        a.abs()
    }

    fn scale(&self, a: &Tensor3<T>, s: T) -> Tensor3<T> {
        a.scale(s)
    }

    fn pad_replicate_right(&self, a: &Tensor3<T>, n: usize) -> Tensor3<T> {
        a.pad_replicate_right(n)
    }

    fn crop_right(&self, a: &Tensor3<T>, n: usize) -> Result<Tensor3<T>> {
        a.crop_right(n)
    }

    fn squeeze(&self, a: &Tensor3<T>, factor: usize) -> Result<Tensor3<T>> {
        a.squeeze(factor)
    }

    fn unsqueeze(&self, a: &Tensor3<T>, factor: usize) -> Result<Tensor3<T>> {
        a.unsqueeze(factor)
    }

    fn slice_channels(&self, a: &Tensor3<T>, start: usize, count: usize) -> Result<Tensor3<T>> {
        a.slice_channels(start, count)
    }

    fn concat_channels(&self, a: &Tensor3<T>, b: &Tensor3<T>) -> Result<Tensor3<T>> {
        a.concat_channels(b)
    }

    fn diff(&self, a: &Tensor3<T>) -> Result<Tensor3<T>> {
        a.diff()
    }

    fn sum(&self, a: &Tensor3<T>) -> Tensor3<T> {
        Tensor3::scalar(a.sum())
    }

    fn mean(&self, a: &Tensor3<T>) -> Tensor3<T> {
        Tensor3::scalar(a.mean())
    }
}

/// Shape-only evaluation that counts multiply-accumulates.
///
/// Convolutions cost `out_ch * in_ch * k * length` per batch element, channel
/// mixes `C * C * length`; every elementwise arithmetic op costs one per
/// output element. Pure data movement (squeeze, padding, slicing) is free.
#[derive(Debug, Default)]
pub struct ShapeCounter {
    macs: Cell<u64>,
    elementwise: Cell<u64>,
}

impl ShapeCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn conv_macs(&self) -> u64 {
        self.macs.get()
    }

    pub fn elementwise_ops(&self) -> u64 {
        self.elementwise.get()
    }

    pub fn total(&self) -> u64 {
        self.macs.get() + self.elementwise.get()
    }

    fn tally(&self, s: Shape) -> Shape {
        self.elementwise
            .set(self.elementwise.get() + (s.0 * s.1 * s.2) as u64);
        s
    }

    fn same(&self, op: &'static str, a: &Shape, b: &Shape) -> Result<Shape> {
        if a != b {
            return Err(Error::dim(op, format!("{a:?} vs {b:?}")));
        }
        Ok(self.tally(*a))
    }
}

impl<T: Scalar> Backend<T> for ShapeCounter {
    type V = Shape;

    fn shape(&self, v: &Shape) -> Shape {
        *v
    }

    fn param(&self, p: &Param<T>) -> Shape {
        p.value.shape()
    }

    fn conv1d(&self, x: &Shape, w: &Shape, _b: &Shape) -> Result<Shape> {
        let (batch, in_ch, length) = *x;
        let (out_ch, w_in, k) = *w;
        if w_in != in_ch {
            return Err(Error::dim(
                "conv1d",
                format!("weight in_channels {w_in} != input channels {in_ch}"),
            ));
        }
        self.macs
            .set(self.macs.get() + (batch * out_ch * in_ch * k * length) as u64);
        // bias add
        self.tally((batch, out_ch, length));
        Ok((batch, out_ch, length))
    }

    fn channel_mix(&self, x: &Shape, w: &Shape) -> Result<Shape> {
        let (batch, c, length) = *x;
        if *w != (1, c, c) {
            return Err(Error::dim("channel_mix", format!("weight {w:?} for {c} channels")));
        }
        self.macs
            .set(self.macs.get() + (batch * c * c * length) as u64);
        Ok(*x)
    }

    fn add(&self, a: &Shape, b: &Shape) -> Result<Shape> {
        self.same("add", a, b)
    }

    fn sub(&self, a: &Shape, b: &Shape) -> Result<Shape> {
        self.same("sub", a, b)
    }

    fn mul(&self, a: &Shape, b: &Shape) -> Result<Shape> {
        self.same("mul", a, b)
    }

    fn div(&self, a: &Shape, b: &Shape) -> Result<Shape> {
        self.same("div", a, b)
    }

    fn exp(&self, a: &Shape) -> Shape {
        self.tally(*a)
    }

    fn relu(&self, a: &Shape) -> Shape {
        self.tally(*a)
    }

    fn tanh(&self, a: &Shape) -> Shape {
        self.tally(*a)
    }

    fn abs(&self, a: &Shape) -> Shape {
        self.tally(*a)
    }

    fn scale(&self, a: &Shape, _s: T) -> Shape {
        self.tally(*a)
    }

    fn pad_replicate_right(&self, a: &Shape, n: usize) -> Shape {
        (a.0, a.1, a.2 + n)
    }

    fn crop_right(&self, a: &Shape, n: usize) -> Result<Shape> {
        if n >= a.2 {
            return Err(Error::dim("crop_right", format!("{n} from length {}", a.2)));
        }
        Ok((a.0, a.1, a.2 - n))
    }

    fn squeeze(&self, a: &Shape, factor: usize) -> Result<Shape> {
        if factor == 0 || !a.2.is_multiple_of(factor) {
            return Err(Error::dim("squeeze", format!("length {} by {factor}", a.2)));
        }
        Ok((a.0, a.1 * factor, a.2 / factor))
    }

    fn unsqueeze(&self, a: &Shape, factor: usize) -> Result<Shape> {
        if factor == 0 || !a.1.is_multiple_of(factor) {
            return Err(Error::dim("unsqueeze", format!("channels {} by {factor}", a.1)));
        }
        Ok((a.0, a.1 / factor, a.2 * factor))
    }

    fn slice_channels(&self, a: &Shape, start: usize, count: usize) -> Result<Shape> {
        if count == 0 || start + count > a.1 {
            return Err(Error::dim("slice_channels", format!("{start}+{count} of {}", a.1)));
        }
        Ok((a.0, count, a.2))
    }

    fn concat_channels(&self, a: &Shape, b: &Shape) -> Result<Shape> {
        if a.0 != b.0 || a.2 != b.2 {
            return Err(Error::dim("concat_channels", format!("{a:?} vs {b:?}")));
        }
        Ok((a.0, a.1 + b.1, a.2))
    }

    fn diff(&self, a: &Shape) -> Result<Shape> {
        Ok(self.tally(*a))
    }

    fn sum(&self, a: &Shape) -> Shape {
        self.tally(*a);
        (1, 1, 1)
    }

    fn mean(&self, a: &Shape) -> Shape {
        self.tally(*a);
        (1, 1, 1)
    }
}
