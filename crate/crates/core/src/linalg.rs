//! Thin wrappers over faer for the dense kernels used here.
//!
//! Everything runs with sequential parallelism so results are bit-identical
//! regardless of the caller's thread pool.

use faer::linalg::matmul::matmul;
use faer::prelude::*;
use faer::{Accum, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Hermitian eigendecomposition of a row-major `dim x dim` matrix.
///
/// Returns eigenvalues in nondecreasing order and eigenvectors as columns of
/// a row-major matrix (`vecs[r * dim + c]` is component `r` of vector `c`).
pub fn hermitian_eigen(data: &[Complex64], dim: usize) -> Result<(Vec<f64>, Vec<Complex64>)> {
    if dim == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let a = Mat::<c64>::from_fn(dim, dim, |i, j| data[i * dim + j]);
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::LinAlg(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let values = (0..dim).map(|i| s[i].re).collect();
    let mut vecs = vec![Complex64::new(0.0, 0.0); dim * dim];
    for r in 0..dim {
        for c in 0..dim {
            vecs[r * dim + c] = u[(r, c)];
        }
    }
    Ok((values, vecs))
}

/// Eigenvalues of a real symmetric matrix, nondecreasing.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::LinAlg(format!("{e:?}")))
}

/// `A^T A` for a tall real matrix.
pub fn gram(a: MatRef<'_, f64>) -> Mat<f64> {
    let n = a.ncols();
    let mut g = Mat::<f64>::zeros(n, n);
    matmul(g.as_mut(), Accum::Replace, a.transpose(), a, 1.0, Par::Seq);
    g
}

/// Solves `(S) X = B` in place for a symmetric positive definite `S`.
pub fn spd_solve_in_place(s: MatRef<'_, f64>, b: MatMut<'_, f64>) -> Result<()> {
    let llt = s
        .llt(Side::Lower)
        .map_err(|e| Error::LinAlg(format!("cholesky failed: {e:?}")))?;
    llt.solve_in_place(b);
    Ok(())
}

/// Solves `A X = B` for Hermitian positive definite row-major `A`; `B` is
/// row-major `dim x ncols`. Returns `None` when `A` is not positive definite.
pub fn hpd_solve(
    a: &[Complex64],
    dim: usize,
    b: &[Complex64],
    ncols: usize,
) -> Option<Vec<Complex64>> {
    let am = Mat::<c64>::from_fn(dim, dim, |i, j| a[i * dim + j]);
    let llt = am.llt(Side::Lower).ok()?;
    let mut x = Mat::<c64>::from_fn(dim, ncols, |i, j| b[i * ncols + j]);
    llt.solve_in_place(x.as_mut());
    let mut out = vec![Complex64::new(0.0, 0.0); dim * ncols];
    for i in 0..dim {
        for j in 0..ncols {
            out[i * ncols + j] = x[(i, j)];
        }
    }
    Some(out)
}

/// Rebuilds `V diag(values) V^H` from row-major eigenvectors.
pub fn recompose(values: &[f64], vecs: &[Complex64], dim: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); dim * dim];
    for (c, &lam) in values.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        for r in 0..dim {
            let vr = vecs[r * dim + c] * lam;
            for s in r..dim {
                out[r * dim + s] += vr * vecs[s * dim + c].conj();
            }
        }
    }
    for r in 0..dim {
        out[r * dim + r].im = 0.0;
        for s in (r + 1)..dim {
            out[s * dim + r] = out[r * dim + s].conj();
        }
    }
    out
}
