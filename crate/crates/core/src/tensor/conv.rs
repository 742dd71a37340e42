//! Same-padded 1-D cross-correlation.
//!
//! `y[o, i] = sum_c sum_j w[o, c, j] * x[c, i + j - (k - 1) / 2] + b[o]`
//!
//! Each batch element is lowered to an `(in_ch * k) x length` column matrix
//! and multiplied against the `out_ch x (in_ch * k)` kernel matrix. Batch
//! elements are processed independently, so results never depend on how a
//! batch is split.

use super::{Scalar, Tensor3};
use crate::error::{Error, Result};

/// Column matrix for one batch element: row `c * k + j` holds channel `c`
/// shifted by `j - pad`, zero outside the signal.
fn im2col<T: Scalar>(x: &[T], channels: usize, length: usize, k: usize, cols: &mut [T]) {
    let pad = (k - 1) / 2;
    debug_assert_eq!(cols.len(), channels * k * length);
    for c in 0..channels {
        let src = &x[c * length..(c + 1) * length];
        for j in 0..k {
            let dst = &mut cols[(c * k + j) * length..(c * k + j + 1) * length];
            // dst[i] = src[i + j - pad]
            let (lo, hi) = valid_range(length, j, pad);
            dst[..lo].fill(T::zero());
            dst[hi..].fill(T::zero());
            if lo < hi {
                dst[lo..hi].copy_from_slice(&src[lo + j - pad..hi + j - pad]);
            }
        }
    }
}

/// Scatter-add of a column-matrix gradient back onto the signal.
fn col2im<T: Scalar>(cols: &[T], channels: usize, length: usize, k: usize, dx: &mut [T]) {
    let pad = (k - 1) / 2;
    for c in 0..channels {
        let dst = &mut dx[c * length..(c + 1) * length];
        for j in 0..k {
            let src = &cols[(c * k + j) * length..(c * k + j + 1) * length];
            let (lo, hi) = valid_range(length, j, pad);
            if lo < hi {
                for (d, &s) in dst[lo + j - pad..hi + j - pad].iter_mut().zip(&src[lo..hi]) {
                    *d = *d + s;
                }
            }
        }
    }
}

/// Output positions `i` for which `i + j - pad` lies inside `[0, length)`.
#[inline]
fn valid_range(length: usize, j: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(j).min(length);
    let hi = (length + pad).saturating_sub(j).min(length);
    (lo, hi.max(lo))
}

pub(crate) fn check_shapes<T: Scalar>(
    x: &Tensor3<T>,
    weight: &Tensor3<T>,
    bias: Option<&Tensor3<T>>,
) -> Result<()> {
    let (out_ch, in_ch, k) = weight.shape();
    if in_ch != x.channels() {
        return Err(Error::dim(
            "conv1d",
            format!(
                "weight in_channels {in_ch} != input channels {}",
                x.channels()
            ),
        ));
    }
    if k % 2 == 0 {
        return Err(Error::dim("conv1d", format!("kernel length {k} is not odd")));
    }
    if let Some(b) = bias {
        if b.len() != out_ch {
            return Err(Error::dim(
                "conv1d",
                format!("bias length {} != weight out_channels {out_ch}", b.len()),
            ));
        }
    }
    Ok(())
}

pub(crate) fn forward<T: Scalar>(
    x: &Tensor3<T>,
    weight: &Tensor3<T>,
    bias: Option<&Tensor3<T>>,
) -> Result<Tensor3<T>> {
    check_shapes(x, weight, bias)?;
    let (batch, in_ch, length) = x.shape();
    let (out_ch, _, k) = weight.shape();
    let rows = in_ch * k;
    let mut out = vec![T::zero(); batch * out_ch * length];
    let mut cols = vec![T::zero(); rows * length];
    for b in 0..batch {
        im2col(x.sample(b), in_ch, length, k, &mut cols);
        let y = &mut out[b * out_ch * length..(b + 1) * out_ch * length];
        if let Some(bias) = bias {
            for (o, row) in y.chunks_exact_mut(length).enumerate() {
                row.fill(bias.data()[o]);
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        matmul(
            out_ch,
            rows,
            length,
            weight.data(),
            (rows as isize, 1),
            &cols,
            (length as isize, 1),
            beta,
            y,
        );
    }
    Ok(Tensor3::from_parts(batch, out_ch, length, out))
}

/// Gradient with respect to the convolution input.
pub(crate) fn backward_input<T: Scalar>(
    grad_out: &Tensor3<T>,
    weight: &Tensor3<T>,
) -> Tensor3<T> {
    let (batch, out_ch, length) = grad_out.shape();
    let (_, in_ch, k) = weight.shape();
    let rows = in_ch * k;
    let mut dx = vec![T::zero(); batch * in_ch * length];
    let mut dcols = vec![T::zero(); rows * length];
    for b in 0..batch {
        // dcols = W^T g
        matmul(
            rows,
            out_ch,
            length,
            weight.data(),
            (1, rows as isize),
            grad_out.sample(b),
            (length as isize, 1),
            T::zero(),
            &mut dcols,
        );
        col2im(
            &dcols,
            in_ch,
            length,
            k,
            &mut dx[b * in_ch * length..(b + 1) * in_ch * length],
        );
    }
    Tensor3::from_parts(batch, in_ch, length, dx)
}

/// Gradients with respect to the kernel and the bias, summed over the batch
/// in batch order.
pub(crate) fn backward_params<T: Scalar>(
    grad_out: &Tensor3<T>,
    x: &Tensor3<T>,
    k: usize,
) -> (Tensor3<T>, Tensor3<T>) {
    let (batch, out_ch, length) = grad_out.shape();
    let in_ch = x.channels();
    let rows = in_ch * k;
    let mut dw = vec![T::zero(); out_ch * rows];
    let mut db = vec![T::zero(); out_ch];
    let mut cols = vec![T::zero(); rows * length];
    for b in 0..batch {
        im2col(x.sample(b), in_ch, length, k, &mut cols);
        let g = grad_out.sample(b);
        // dW += g cols^T
        matmul(
            out_ch,
            length,
            rows,
            g,
            (length as isize, 1),
            &cols,
            (1, length as isize),
            T::one(),
            &mut dw,
        );
        for (o, row) in g.chunks_exact(length).enumerate() {
            db[o] = db[o] + row.iter().fold(T::zero(), |acc, &v| acc + v);
        }
    }
    (
        Tensor3::from_parts(out_ch, in_ch, k, dw),
        Tensor3::from_parts(1, 1, out_ch, db),
    )
}

/// Row-major `c = a * b + beta * c` where `c` is `m x n` contiguous.
#[allow(clippy::too_many_arguments)]
fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    (rsa, csa): (isize, isize),
    b: &[T],
    (rsb, csb): (isize, isize),
    beta: T,
    c: &mut [T],
) {
    assert!(extent(m, k, rsa, csa) <= a.len());
    assert!(extent(k, n, rsb, csb) <= b.len());
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: extents checked above; `c` is a distinct mutable borrow.
    unsafe {
        T::gemm(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn extent(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
}
