//! Small dense symmetric-positive-definite solver used by the alternating
//! least squares sweeps and the Gaussian-process surrogate.

use crate::error::{Error, Result};

/// In-place Cholesky factorization of a row-major symmetric matrix. On
/// success the lower triangle holds L with A = L L^T.
pub fn cholesky_decompose(a: &mut [f64], n: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::SingularMatrix);
        }
        let diag = diag.sqrt();
        a[j * n + j] = diag;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / diag;
        }
    }
    Ok(())
}

/// Solves L L^T x = b given the factor from [`cholesky_decompose`],
/// overwriting `b` with the solution.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    debug_assert_eq!(l.len(), n * n);
    debug_assert_eq!(b.len(), n);
    // Forward substitution: L y = b
    for i in 0..n {
        let mut v = b[i];
        for k in 0..i {
            v -= l[i * n + k] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
    // Back substitution: L^T x = y
    for i in (0..n).rev() {
        let mut v = b[i];
        for k in i + 1..n {
            v -= l[k * n + i] * b[k];
        }
        b[i] = v / l[i * n + i];
    }
}

/// One-shot solve of a symmetric positive definite system. `a` is consumed as
/// scratch space.
pub fn solve_spd(a: &mut [f64], n: usize, b: &mut [f64]) -> Result<()> {
    cholesky_decompose(a, n)?;
    cholesky_solve(a, n, b);
    Ok(())
}

/// Log-determinant of A from its Cholesky factor: 2 sum ln L_ii.
pub fn log_det_from_cholesky(l: &[f64], n: usize) -> f64 {
    (0..n).map(|i| l[i * n + i].ln()).sum::<f64>() * 2.0
}
