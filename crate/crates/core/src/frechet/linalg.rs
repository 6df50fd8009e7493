//! Thin deterministic wrappers over faer: every kernel runs sequentially so
//! reductions happen in a fixed order regardless of the host's thread count.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::matmul::matmul;
use faer::diag::Diag;
use faer::{Accum, Mat, MatRef, Par};

use crate::error::{Error, Result};

/// `lhs * rhs`.
pub fn product(lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(lhs.nrows(), rhs.ncols());
    matmul(out.as_mut(), Accum::Replace, lhs, rhs, 1.0, Par::Seq);
    out
}

/// `lhs^T * lhs` scaled by `alpha`.
pub fn gram(lhs: MatRef<'_, f64>, alpha: f64) -> Mat<f64> {
    let mut out = Mat::zeros(lhs.ncols(), lhs.ncols());
    matmul(out.as_mut(), Accum::Replace, lhs.transpose(), lhs, alpha, Par::Seq);
    out
}

/// Eigenvalues (ascending) and, optionally, eigenvectors of a symmetric
/// matrix. Only the lower triangle is read.
pub fn symmetric_eigen(a: MatRef<'_, f64>, vectors: bool) -> Result<(Vec<f64>, Option<Mat<f64>>)> {
    let n = a.nrows();
    let compute = if vectors {
        ComputeEigenvectors::Yes
    } else {
        ComputeEigenvectors::No
    };
    let mut s = Diag::<f64>::zeros(n);
    let mut u = vectors.then(|| Mat::<f64>::zeros(n, n));
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        compute,
        Par::Seq,
        Default::default(),
    ));
    evd::self_adjoint_evd(
        a,
        s.as_mut(),
        u.as_mut().map(|m| m.as_mut()),
        Par::Seq,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Data(format!("symmetric eigensolver did not converge: {e:?}")))?;
    let values = s.column_vector().iter().copied().collect();
    Ok((values, u))
}

/// Largest absolute entry.
pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// Largest `|a_ij - a_ji|`.
pub fn max_asymmetry(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in j + 1..a.nrows() {
            m = m.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    m
}

pub fn trace(a: MatRef<'_, f64>) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}
