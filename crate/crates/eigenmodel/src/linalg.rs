//! Dense Cholesky helpers for the small symmetric systems used throughout
//! the crate (state dimensions are tiny; the largest factorizations are the
//! per-slice Newton systems in initialization, at `n x n`).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Variance floor applied before inversions inside the inference loops.
/// Clamping events are counted and surfaced in fit diagnostics.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let mut clamped = 0;
    cholesky_floored(a, 0.0, &mut clamped)
}

/// Cholesky with a floor on the input diagonal: entries below `floor` are
/// raised to `floor` before factorization and counted in `clamped`.
pub fn cholesky_floored(
    a: &ArrayView2<f64>,
    floor: f64,
    clamped: &mut u64,
) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::numerical("cholesky: matrix is not square"));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[(j, j)];
        if diag < floor {
            diag = floor;
            *clamped += 1;
        }
        let mut s = diag;
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::numerical(format!(
                "cholesky: non-positive pivot {s:.3e} at index {j}"
            )));
        }
        l[(j, j)] = s.sqrt();
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / l[(j, j)];
        }
    }
    Ok(l)
}

/// Cholesky-like factor of a positive *semi*-definite matrix, for sampling.
/// Pivots at or below an absolute tolerance produce a zero column, so exactly
/// degenerate covariances yield exact draws at the mean.
pub fn cholesky_psd(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let tol = 1e-12;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut s = a[(j, j)];
        for k in 0..j {
            s -= l[(j, k)] * l[(j, k)];
        }
        if s < -1e-8 || !s.is_finite() {
            return Err(Error::numerical(format!(
                "psd factor: pivot {s:.3e} at index {j}"
            )));
        }
        if s <= tol {
            // Degenerate direction; leave the column zero.
            continue;
        }
        l[(j, j)] = s.sqrt();
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / l[(j, j)];
        }
    }
    Ok(l)
}

/// Solves `A x = b` given the lower Cholesky factor of `A`.
pub fn chol_solve_vec(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.to_owned();
    for i in 0..n {
        for k in 0..i {
            let v = y[k];
            y[i] -= l[(i, k)] * v;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let v = y[k];
            y[i] -= l[(k, i)] * v;
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Solves `A X = B` column-by-column given the lower Cholesky factor of `A`.
pub fn chol_solve_mat(l: &ArrayView2<f64>, b: &ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros(b.raw_dim());
    for (c, col) in b.columns().into_iter().enumerate() {
        let x = chol_solve_vec(l, &col);
        out.column_mut(c).assign(&x);
    }
    out
}

/// Inverse of a symmetric positive-definite matrix, with the diagonal floored
/// at `floor` before factorization. The result is symmetrized exactly.
pub fn spd_inverse(a: &ArrayView2<f64>, floor: f64, clamped: &mut u64) -> Result<Array2<f64>> {
    let n = a.nrows();
    let l = cholesky_floored(a, floor, clamped)?;
    let eye = Array2::<f64>::eye(n);
    let mut inv = chol_solve_mat(&l.view(), &eye.view());
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    Ok(inv)
}

/// Solves `A x = b` for symmetric positive-definite `A` with floored diagonal.
pub fn spd_solve(
    a: &ArrayView2<f64>,
    b: &ArrayView1<f64>,
    floor: f64,
    clamped: &mut u64,
) -> Result<Array1<f64>> {
    let l = cholesky_floored(a, floor, clamped)?;
    Ok(chol_solve_vec(&l.view(), b))
}
