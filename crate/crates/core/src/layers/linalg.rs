//! Small dense square-matrix helpers for the 1x1 convolution, row-major f64.

use crate::error::{Error, Result};

/// Q factor of `a` by modified Gram-Schmidt on its columns, with signs
/// chosen so that `R` has a positive diagonal.
pub(crate) fn orthonormalize(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut q = a.to_vec();
    for j in 0..n {
        for prev in 0..j {
            let dot: f64 = (0..n).map(|r| q[r * n + prev] * q[r * n + j]).sum();
            for r in 0..n {
                q[r * n + j] -= dot * q[r * n + prev];
            }
        }
        let norm = (0..n).map(|r| q[r * n + j].powi(2)).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::Numeric(format!(
                "rank-deficient matrix at column {j} during orthonormalization"
            )));
        }
        for r in 0..n {
            q[r * n + j] /= norm;
        }
    }
    // One re-orthogonalisation pass keeps QᵀQ = I at rounding level for
    // ill-conditioned draws.
    for j in 0..n {
        for prev in 0..j {
            let dot: f64 = (0..n).map(|r| q[r * n + prev] * q[r * n + j]).sum();
            for r in 0..n {
                q[r * n + j] -= dot * q[r * n + prev];
            }
        }
        let norm = (0..n).map(|r| q[r * n + j].powi(2)).sum::<f64>().sqrt();
        for r in 0..n {
            q[r * n + j] /= norm;
        }
    }
    Ok(q)
}

/// `(inverse, determinant)` by Gauss-Jordan elimination with partial pivoting.
pub(crate) fn invert(a: &[f64], n: usize) -> Result<(Vec<f64>, f64)> {
    let det = determinant(a, n);
    if !(det.abs() > 1e-12) {
        return Err(Error::Numeric(format!(
            "1x1 convolution weight is near-singular: |det W| = {:e} <= 1e-12",
            det.abs()
        )));
    }
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))
            .unwrap_or(col);
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
                inv.swap(col * n + k, pivot * n + k);
            }
        }
        let p = m[col * n + col];
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[r * n + k] -= f * m[col * n + k];
                inv[r * n + k] -= f * inv[col * n + k];
            }
        }
    }
    Ok((inv, det))
}

/// Determinant by LU elimination with partial pivoting.
pub(crate) fn determinant(a: &[f64], n: usize) -> f64 {
    let mut m = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| m[x * n + col].abs().total_cmp(&m[y * n + col].abs()))
            .unwrap_or(col);
        if m[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                m.swap(col * n + k, pivot * n + k);
            }
            det = -det;
        }
        let p = m[col * n + col];
        det *= p;
        for r in col + 1..n {
            let f = m[r * n + col] / p;
            for k in col..n {
                m[r * n + k] -= f * m[col * n + k];
            }
        }
    }
    det
}

/// `max |(AᵀA − I)_ij|`.
pub fn orthonormality_error(a: &[f64], n: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = (0..n).map(|r| a[r * n + i] * a[r * n + j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_known_matrix() {
        let a = [4.0, 7.0, 2.0, 6.0];
        let (inv, det) = invert(&a, 2).unwrap();
        assert!((det - 10.0).abs() < 1e-12);
        let expected = [0.6, -0.7, -0.2, 0.4];
        for (x, y) in inv.iter().zip(expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_names_determinant() {
        let err = invert(&[1.0, 2.0, 2.0, 4.0], 2).unwrap_err().to_string();
        assert!(err.contains("det"), "{err}");
    }

    #[test]
    fn gram_schmidt_is_orthonormal() {
        let a = [0.3, -1.2, 0.7, 2.0, 0.1, -0.4, 1.1, 0.9, 0.5];
        let q = orthonormalize(&a, 3).unwrap();
        assert!(orthonormality_error(&q, 3) < 1e-14);
        assert!((determinant(&q, 3).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn determinant_with_pivoting() {
        assert_eq!(determinant(&[0.0, 1.0, 1.0, 0.0], 2), -1.0);
        assert!((determinant(&[2.0, 0.0, 1.0, 1.0, 3.0, 0.0, 0.0, 1.0, 4.0], 3) - 25.0).abs() < 1e-12);
    }
}
