//! Reference computations for test suites.
//!
//! Nothing in here is used by the library itself. The routines are written
//! independently of the eigendecomposition path the library relies on, so
//! agreement between the two is meaningful.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
///
/// The input is scaled by `2^-s` until its 1-norm is at most 1/2, the series
/// is summed until the next term is negligible, and the result is squared `s`
/// times. Works for arbitrary (non-normal) square matrices.
pub fn expm(a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    let norm = one_norm(a);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm * scale > 0.5 {
        scale *= 0.5;
        squarings += 1;
    }
    let scaled = a * Complex64::new(scale, 0.0);

    let mut sum = DMatrix::<Complex64>::identity(n, n);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    for k in 1..=60 {
        term = &term * &scaled * Complex64::new(1.0 / k as f64, 0.0);
        sum += &term;
        if one_norm(&term) <= f64::EPSILON * 1e-3 * one_norm(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Maximum absolute column sum.
pub fn one_norm(a: &DMatrix<Complex64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Column-stacking vectorization: entry `(i, j)` lands at `i + j * rows`.
pub fn vec_columns(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    a.iter().copied().collect()
}

/// Inverse of [`vec_columns`] for a square `dim x dim` matrix.
pub fn unvec_columns(v: &[Complex64], dim: usize) -> DMatrix<Complex64> {
    DMatrix::from_column_slice(dim, dim, v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_exponential() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(2f64.ln(), 0.0),
            Complex64::new(-3.0, 0.0),
        ]));
        let e = expm(&a);
        assert!((e[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!((e[(1, 1)].re - 2.0).abs() < 1e-14);
        assert!((e[(2, 2)].re - (-3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn nilpotent_exponential_is_exact_polynomial() {
        // exp([[0, t], [0, 0]]) = [[1, t], [0, 1]]
        let mut a = DMatrix::<Complex64>::zeros(2, 2);
        a[(0, 1)] = Complex64::new(7.5, 0.0);
        let e = expm(&a);
        assert!((e[(0, 1)].re - 7.5).abs() < 1e-13);
        assert!((e[(0, 0)].re - 1.0).abs() < 1e-15);
        assert!(e[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn rotation_generator() {
        // exp(-i t sigma_x) = cos t I - i sin t sigma_x
        let t = 1.3;
        let mut a = DMatrix::<Complex64>::zeros(2, 2);
        a[(0, 1)] = Complex64::new(0.0, -t);
        a[(1, 0)] = Complex64::new(0.0, -t);
        let e = expm(&a);
        assert!((e[(0, 0)] - Complex64::new(t.cos(), 0.0)).norm() < 1e-14);
        assert!((e[(0, 1)] - Complex64::new(0.0, -t.sin())).norm() < 1e-14);
    }
}
