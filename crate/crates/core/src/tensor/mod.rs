//! Dense `batch x channels x length` arrays and the primitive operations the
//! layers are built from.
//!
//! Every operation is a pure function returning a fresh tensor; nothing
//! aliases its input storage.

pub(crate) mod conv;
mod scalar;

pub use scalar::Scalar;

use crate::error::{Error, Result};

/// `(batch, channels, length)`.
pub type Shape = (usize, usize, usize);

/// Row-major rank-3 array in `(batch, channel, length)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3<T> {
    batch: usize,
    channels: usize,
    length: usize,
    data: Vec<T>,
}

impl<T: Scalar> Tensor3<T> {
    /// Validating constructor: positive extents, matching size, finite data.
    pub fn new(batch: usize, channels: usize, length: usize, data: Vec<T>) -> Result<Self> {
        if batch == 0 || channels == 0 || length == 0 {
            return Err(Error::dim(
                "Tensor3::new",
                format!("extents must be positive, got ({batch}, {channels}, {length})"),
            ));
        }
        if data.len() != batch * channels * length {
            return Err(Error::dim(
                "Tensor3::new",
                format!(
                    "data size {} != batch {batch} x channels {channels} x length {length}",
                    data.len()
                ),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite element {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self::from_parts(batch, channels, length, data))
    }

    /// Unchecked constructor for internal use where invariants hold by
    /// construction.
    pub(crate) fn from_parts(batch: usize, channels: usize, length: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), batch * channels * length);
        Self {
            batch,
            channels,
            length,
            data,
        }
    }

    pub fn zeros(batch: usize, channels: usize, length: usize) -> Self {
        Self::from_parts(
            batch,
            channels,
            length,
            vec![T::zero(); batch * channels * length],
        )
    }

    pub fn full(shape: Shape, value: T) -> Self {
        let (b, c, l) = shape;
        Self::from_parts(b, c, l, vec![value; b * c * l])
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let (b, c, l) = shape;
        let mut data = Vec::with_capacity(b * c * l);
        for bi in 0..b {
            for ci in 0..c {
                for li in 0..l {
                    data.push(f(bi, ci, li));
                }
            }
        }
        Self::from_parts(b, c, l, data)
    }

    /// Single-sample, single-channel tensor from a slice.
    pub fn from_signal(signal: &[T]) -> Result<Self> {
        Self::new(1, 1, signal.len(), signal.to_vec())
    }

    /// Single-sample tensor whose channels are the given equal-length rows.
    pub fn from_channels(rows: &[&[T]]) -> Result<Self> {
        let length = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().position(|r| r.len() != length) {
            return Err(Error::dim(
                "Tensor3::from_channels",
                format!("channel {bad} has length {} != {length}", rows[bad].len()),
            ));
        }
        Self::new(1, rows.len(), length, rows.concat())
    }

    pub fn scalar(value: T) -> Self {
        Self::from_parts(1, 1, 1, vec![value])
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        (self.batch, self.channels, self.length)
    }

    #[inline]
    pub fn batch(&self) -> usize {
        self.batch
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn length(&self) -> usize {
        self.length
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, i: usize) -> T {
        self.data[(b * self.channels + c) * self.length + i]
    }

    /// One `(batch, channel)` row.
    #[inline]
    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let start = (b * self.channels + c) * self.length;
        &self.data[start..start + self.length]
    }

    /// All channels of one batch element.
    #[inline]
    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.channels * self.length;
        &self.data[b * n..(b + 1) * n]
    }

    /// Returns the single element of a `(1, 1, 1)` tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() != 1 {
            return Err(Error::Usage(format!(
                "item() on non-scalar tensor of shape {:?}",
                self.shape()
            )));
        }
        Ok(self.data[0])
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Debug audit: errors naming `op` if any element is NaN or infinite.
    pub fn check_finite(&self, op: &str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::Numeric(format!(
                "{op} produced non-finite element at flat index {i}"
            ))),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor3<U> {
        Tensor3::from_parts(
            self.batch,
            self.channels,
            self.length,
            self.data.iter().map(|&v| U::of(v.as_f64())).collect(),
        )
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_parts(
            self.batch,
            self.channels,
            self.length,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other, op)?;
        Ok(Self::from_parts(
            self.batch,
            self.channels,
            self.length,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    pub(crate) fn expect_same_shape(&self, other: &Self, op: &'static str) -> Result<()> {
        if self.shape() == other.shape() {
            return Ok(());
        }
        let (a, b) = (self.shape(), other.shape());
        let mut axes = Vec::new();
        if a.0 != b.0 {
            axes.push(format!("batch {} vs {}", a.0, b.0));
        }
        if a.1 != b.1 {
            axes.push(format!("channels {} vs {}", a.1, b.1));
        }
        if a.2 != b.2 {
            axes.push(format!("length {} vs {}", a.2, b.2));
        }
        Err(Error::dim(op, axes.join(", ")))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn div(&self, other: &Self) -> Result<Self> {
        self.expect_same_shape(other, "div")?;
        if let Some(i) = other.data.iter().position(|v| v.is_zero()) {
            return Err(Error::Numeric(format!(
                "division by zero at flat index {i}"
            )));
        }
        self.zip_with(other, "div", |a, b| a / b)
    }

    pub fn exp(&self) -> Self {
        self.map(T::exp)
    }

    pub fn relu(&self) -> Self {
        self.map(|v| if v > T::zero() { v } else { T::zero() })
    }

    pub fn tanh(&self) -> Self {
        self.map(T::tanh)
    }

    pub fn abs(&self) -> Self {
        self.map(T::abs)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    pub fn mean(&self) -> T {
        self.sum() / T::of(self.data.len() as f64)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Largest elementwise `|a - b|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.expect_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs())))
    }

    /// Appends `n` copies of the last sample of every row.
    pub fn pad_replicate_right(&self, n: usize) -> Self {
        if n == 0 {
            return self.clone();
        }
        let new_len = self.length + n;
        let mut data = Vec::with_capacity(self.batch * self.channels * new_len);
        for row in self.data.chunks_exact(self.length) {
            data.extend_from_slice(row);
            let last = row[self.length - 1];
            data.extend(std::iter::repeat_n(last, n));
        }
        Self::from_parts(self.batch, self.channels, new_len, data)
    }

    /// Drops the last `n` samples of every row.
    pub fn crop_right(&self, n: usize) -> Result<Self> {
        if n >= self.length {
            return Err(Error::dim(
                "crop_right",
                format!("cannot crop {n} samples from length {}", self.length),
            ));
        }
        let new_len = self.length - n;
        let mut data = Vec::with_capacity(self.batch * self.channels * new_len);
        for row in self.data.chunks_exact(self.length) {
            data.extend_from_slice(&row[..new_len]);
        }
        Ok(Self::from_parts(self.batch, self.channels, new_len, data))
    }

    /// Trades length for channels: output channel `c * factor + p` at
    /// position `i` is input channel `c` at position `i * factor + p`.
    pub fn squeeze(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.length.is_multiple_of(factor) {
            return Err(Error::dim(
                "squeeze",
                format!("length {} not divisible by factor {factor}", self.length),
            ));
        }
        let out_len = self.length / factor;
        let out_ch = self.channels * factor;
        let mut data = vec![T::zero(); self.data.len()];
        for b in 0..self.batch {
            for c in 0..self.channels {
                let src = self.row(b, c);
                for p in 0..factor {
                    let dst_start = (b * out_ch + c * factor + p) * out_len;
                    let dst = &mut data[dst_start..dst_start + out_len];
                    for (i, d) in dst.iter_mut().enumerate() {
                        *d = src[i * factor + p];
                    }
                }
            }
        }
        Ok(Self::from_parts(self.batch, out_ch, out_len, data))
    }

    /// Exact inverse of [`squeeze`](Self::squeeze).
    pub fn unsqueeze(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.channels.is_multiple_of(factor) {
            return Err(Error::dim(
                "unsqueeze",
                format!(
                    "channels {} not divisible by factor {factor}",
                    self.channels
                ),
            ));
        }
        let out_ch = self.channels / factor;
        let out_len = self.length * factor;
        let mut data = vec![T::zero(); self.data.len()];
        for b in 0..self.batch {
            for c in 0..out_ch {
                let dst_start = (b * out_ch + c) * out_len;
                for p in 0..factor {
                    let src = self.row(b, c * factor + p);
                    for (i, &s) in src.iter().enumerate() {
                        data[dst_start + i * factor + p] = s;
                    }
                }
            }
        }
        Ok(Self::from_parts(self.batch, out_ch, out_len, data))
    }

    /// Same-padded cross-correlation; `weight` is `(out_ch, in_ch, k)` and
    /// `bias`, when given, holds `out_ch` elements.
    pub fn conv1d(&self, weight: &Self, bias: Option<&Self>) -> Result<Self> {
        conv::forward(self, weight, bias)
    }

    /// Per-position channel mix `y[:, o, i] = sum_c w[o, c] x[:, c, i]` with
    /// `w` stored as a `(1, C, C)` tensor.
    pub fn channel_mix(&self, weight: &Self) -> Result<Self> {
        let c = self.channels;
        if weight.shape() != (1, c, c) {
            return Err(Error::dim(
                "channel_mix",
                format!(
                    "weight shape {:?} != (1, {c}, {c}) for input channels {c}",
                    weight.shape()
                ),
            ));
        }
        let l = self.length;
        let mut data = vec![T::zero(); self.data.len()];
        for b in 0..self.batch {
            let x = self.sample(b);
            let y = &mut data[b * c * l..(b + 1) * c * l];
            for o in 0..c {
                let out = &mut y[o * l..(o + 1) * l];
                for ci in 0..c {
                    let w = weight.data[o * c + ci];
                    for (d, &s) in out.iter_mut().zip(&x[ci * l..(ci + 1) * l]) {
                        *d = *d + w * s;
                    }
                }
            }
        }
        Ok(Self::from_parts(self.batch, c, l, data))
    }

    /// Channels `start..start + count`.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Self> {
        if count == 0 || start + count > self.channels {
            return Err(Error::dim(
                "slice_channels",
                format!(
                    "range {start}..{} outside channels {}",
                    start + count,
                    self.channels
                ),
            ));
        }
        let l = self.length;
        let mut data = Vec::with_capacity(self.batch * count * l);
        for b in 0..self.batch {
            let s = self.sample(b);
            data.extend_from_slice(&s[start * l..(start + count) * l]);
        }
        Ok(Self::from_parts(self.batch, count, l, data))
    }

    /// Stacks `self` and `other` along the channel axis.
    pub fn concat_channels(&self, other: &Self) -> Result<Self> {
        if self.batch != other.batch || self.length != other.length {
            let mut axes = Vec::new();
            if self.batch != other.batch {
                axes.push(format!("batch {} vs {}", self.batch, other.batch));
            }
            if self.length != other.length {
                axes.push(format!("length {} vs {}", self.length, other.length));
            }
            return Err(Error::dim("concat_channels", axes.join(", ")));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        for b in 0..self.batch {
            data.extend_from_slice(self.sample(b));
            data.extend_from_slice(other.sample(b));
        }
        Ok(Self::from_parts(
            self.batch,
            self.channels + other.channels,
            self.length,
            data,
        ))
    }

    /// Stacks tensors along the batch axis.
    pub fn concat_batch(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("concat_batch of zero tensors".into()))?;
        let (_, c, l) = first.shape();
        let mut data = Vec::new();
        let mut batch = 0;
        for (i, p) in parts.iter().enumerate() {
            if p.channels != c || p.length != l {
                return Err(Error::dim(
                    "concat_batch",
                    format!(
                        "part {i} has (channels {}, length {}) != ({c}, {l})",
                        p.channels, p.length
                    ),
                ));
            }
            batch += p.batch;
            data.extend_from_slice(&p.data);
        }
        Ok(Self::from_parts(batch, c, l, data))
    }

    /// Batch elements `start..start + count`.
    pub fn slice_batch(&self, start: usize, count: usize) -> Result<Self> {
        if count == 0 || start + count > self.batch {
            return Err(Error::dim(
                "slice_batch",
                format!("range {start}..{} outside batch {}", start + count, self.batch),
            ));
        }
        let n = self.channels * self.length;
        Ok(Self::from_parts(
            count,
            self.channels,
            self.length,
            self.data[start * n..(start + count) * n].to_vec(),
        ))
    }

    /// Forward difference along the length axis with the last difference
    /// replicated, so the output keeps the input length.
    pub fn diff(&self) -> Result<Self> {
        if self.length < 2 {
            return Err(Error::dim(
                "diff",
                format!("length {} < 2", self.length),
            ));
        }
        let l = self.length;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(l) {
            for i in 0..l - 1 {
                data.push(row[i + 1] - row[i]);
            }
            data.push(row[l - 1] - row[l - 2]);
        }
        Ok(Self::from_parts(self.batch, self.channels, l, data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t1(v: &[f64]) -> Tensor3<f64> {
        Tensor3::from_signal(v).unwrap()
    }

    fn random(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor3<f64> {
        Tensor3::from_fn(shape, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn constructor_rejects_bad_size_and_nan() {
        assert!(matches!(
            Tensor3::<f32>::new(1, 2, 3, vec![0.0; 5]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            Tensor3::<f32>::new(1, 1, 2, vec![0.0, f32::NAN]),
            Err(Error::Numeric(_))
        ));
        assert!(Tensor3::<f32>::new(0, 1, 1, vec![]).is_err());
    }

    #[test]
    fn conv_hand_example() {
        let x = t1(&[1.0, 2.0, 3.0]);
        let w = Tensor3::new(1, 1, 3, vec![1.0, 0.0, -1.0]).unwrap();
        let b = Tensor3::new(1, 1, 1, vec![0.0]).unwrap();
        let y = x.conv1d(&w, Some(&b)).unwrap();
        assert_eq!(y.data(), &[-2.0, -2.0, 2.0]);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random((2, 1, 11), &mut rng);
        let w = Tensor3::new(1, 1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(x.conv1d(&w, None).unwrap(), x);
    }

    #[test]
    fn conv_shape_errors_name_axes() {
        let x = Tensor3::<f32>::zeros(1, 3, 8);
        let w = Tensor3::<f32>::zeros(2, 2, 3);
        let err = x.conv1d(&w, None).unwrap_err().to_string();
        assert!(err.contains("in_channels 2"), "{err}");
        let even = Tensor3::<f32>::zeros(2, 3, 4);
        assert!(x.conv1d(&even, None).is_err());
        let w = Tensor3::<f32>::zeros(2, 3, 3);
        let bad_bias = Tensor3::<f32>::zeros(1, 1, 3);
        assert!(x.conv1d(&w, Some(&bad_bias)).is_err());
    }

    #[test]
    fn conv_kernel_longer_than_signal() {
        // k = 7 over length 2: only the centre taps ever touch the signal.
        let x = t1(&[1.0, 2.0]);
        let w = Tensor3::new(1, 1, 7, vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(x.conv1d(&w, None).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn squeeze_layout() {
        let x = t1(&[1.0, 2.0, 3.0, 4.0]);
        let s = x.squeeze(2).unwrap();
        assert_eq!(s.shape(), (1, 2, 2));
        assert_eq!(s.data(), &[1.0, 3.0, 2.0, 4.0]);
        assert_eq!(s.unsqueeze(2).unwrap(), x);
        assert_eq!(x.squeeze(1).unwrap(), x);
        assert_eq!(x.unsqueeze(1).unwrap(), x);
    }

    #[test]
    fn squeeze_rejects_indivisible() {
        let x = t1(&[1.0, 2.0, 3.0]);
        assert!(matches!(x.squeeze(2), Err(Error::Dimension { .. })));
        assert!(matches!(x.unsqueeze(2), Err(Error::Dimension { .. })));
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(t1(&[-1.0, 0.0, 2.0]).relu().data(), &[0.0, 0.0, 2.0]);
        assert_eq!(t1(&[0.0, 0.0]).exp().data(), &[1.0, 1.0]);
        assert!(t1(&[1.0]).div(&t1(&[0.0])).is_err());
        assert!(t1(&[1.0]).add(&t1(&[1.0, 2.0])).is_err());
        let x = t1(&[1.0, 5.0, 2.0]);
        let padded = x.pad_replicate_right(3);
        assert_eq!(padded.data(), &[1.0, 5.0, 2.0, 2.0, 2.0, 2.0]);
        assert_eq!(padded.crop_right(3).unwrap(), x);
        assert!(x.crop_right(3).is_err());
    }

    #[test]
    fn channel_ops() {
        let x = Tensor3::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let swap = Tensor3::new(1, 2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(x.channel_mix(&swap).unwrap().data(), &[3.0, 4.0, 1.0, 2.0]);
        let a = x.slice_channels(0, 1).unwrap();
        let b = x.slice_channels(1, 1).unwrap();
        assert_eq!(a.concat_channels(&b).unwrap(), x);
        assert_eq!(t1(&[1.0, 3.0, 6.0, 10.0]).diff().unwrap().data(), &[2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn conv_is_linear_in_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random((2, 3, 19), &mut rng).cast::<f32>();
            let y = random((2, 3, 19), &mut rng).cast::<f32>();
            let w = random((4, 3, 5), &mut rng).cast::<f32>();
            let (a, b) = (rng.gen_range(-2.0..2.0f32), rng.gen_range(-2.0..2.0f32));
            let lhs = x.scale(a).add(&y.scale(b)).unwrap().conv1d(&w, None).unwrap();
            let rhs = x
                .conv1d(&w, None)
                .unwrap()
                .scale(a)
                .add(&y.conv1d(&w, None).unwrap().scale(b))
                .unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-5);
        }
    }

    proptest! {
        #[test]
        fn squeeze_unsqueeze_are_bitwise_inverses(
            batch in 1usize..3,
            channels in 1usize..4,
            chunks in 1usize..8,
            factor in 1usize..6,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random((batch, channels, chunks * factor), &mut rng).cast::<f32>();
            prop_assert_eq!(&x.squeeze(factor).unwrap().unsqueeze(factor).unwrap(), &x);
            let y = random((batch, channels * factor, chunks), &mut rng);
            prop_assert_eq!(&y.unsqueeze(factor).unwrap().squeeze(factor).unwrap(), &y);
        }

        #[test]
        fn pad_crop_roundtrip(len in 1usize..20, n in 0usize..6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random((2, 2, len), &mut rng);
            prop_assert_eq!(&x.pad_replicate_right(n).crop_right(n).unwrap(), &x);
        }
    }
}
