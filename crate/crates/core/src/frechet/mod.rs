//! Gaussian fits to embedding sets and the Fréchet distance between them:
//!
//! ```text
//! F(μ1, Σ1, μ2, Σ2) = ‖μ1 − μ2‖² + Tr(Σ1 + Σ2 − 2 (Σ1 Σ2)^½)
//! ```
//!
//! `Tr (Σ1 Σ2)^½` is evaluated as the sum of square roots of the
//! eigenvalues of the symmetric matrix `Σ1^½ Σ2 Σ1^½`, which shares its
//! spectrum with `Σ1 Σ2`. Both eigenproblems are symmetric. Negative
//! eigenvalues produced by round-off are clamped to zero and counted; no
//! diagonal regularization is ever added.
//!
//! Covariances use the unbiased `N − 1` normalizer. Estimator bias is not
//! corrected.

pub mod linalg;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingSet;
use crate::error::{Error, Result};

/// Relative tolerance on `|Σ_ij − Σ_ji|` against the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues below `-PSD_TOL * max(1, λ_max)` mean the input is not PSD.
pub const PSD_TOL: f64 = 1e-8;
/// Negative totals within `NEGATIVE_TOTAL_TOL * max(1, Tr Σ1 + Tr Σ2)` of
/// zero are clamped; larger ones are reported as errors.
pub const NEGATIVE_TOTAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    mean: Vec<f64>,
    cov: Mat<f64>,
    count: usize,
}

impl GaussianStats {
    pub fn new(mean: Vec<f64>, cov: Mat<f64>, count: usize) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Shape("statistics need D >= 1".into()));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::Shape(format!(
                "covariance is {}x{}, mean has {d} entries",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if count < 2 {
            return Err(Error::Range(format!("statistics need N >= 2, got {count}")));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite mean".into()));
        }
        if (0..d).any(|j| (0..d).any(|i| !cov[(i, j)].is_finite())) {
            return Err(Error::Data("non-finite covariance".into()));
        }
        check_symmetric(cov.as_ref())?;
        Ok(Self { mean, cov, count })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> MatRef<'_, f64> {
        self.cov.as_ref()
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Two-pass fit: column means, then `Xcᵀ Xc / (N − 1)` on the centered data.
pub fn fit_gaussian(set: &EmbeddingSet) -> Result<GaussianStats> {
    let (n, d) = (set.len(), set.dim());
    if n < 2 {
        return Err(Error::Range(format!(
            "need at least 2 samples to fit a covariance, got {n}"
        )));
    }
    let mut mean = vec![0.0; d];
    for row in set.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let data = set.data();
    let centered = Mat::from_fn(n, d, |i, j| data[i * d + j] - mean[j]);
    let mut cov = linalg::gram(centered.as_ref(), 1.0 / (n - 1) as f64);
    symmetrize(&mut cov);
    GaussianStats::new(mean, cov, n)
}

fn symmetrize(a: &mut Mat<f64>) {
    for j in 0..a.ncols() {
        for i in j + 1..a.nrows() {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
}

fn check_symmetric(a: MatRef<'_, f64>) -> Result<()> {
    let scale = linalg::max_abs(a);
    let skew = linalg::max_asymmetry(a);
    if skew > SYMMETRY_TOL * scale {
        return Err(Error::Data(format!(
            "matrix is not symmetric: max |a_ij - a_ji| = {skew:e} against max entry {scale:e}"
        )));
    }
    Ok(())
}

/// Counts and zeroes negative eigenvalues, rejecting any below the PSD
/// tolerance.
fn clamp_spectrum(values: &mut [f64], what: &str) -> Result<usize> {
    let top = values.iter().copied().fold(0.0f64, f64::max);
    let floor = -PSD_TOL * top.max(1.0);
    let mut clamped = 0;
    for v in values.iter_mut() {
        if *v < 0.0 {
            if *v < floor {
                return Err(Error::Data(format!(
                    "{what} is not positive semidefinite: eigenvalue {v:e} with λ_max {top:e}"
                )));
            }
            *v = 0.0;
            clamped += 1;
        }
    }
    Ok(clamped)
}

/// Symmetric PSD square root via eigendecomposition, with the number of
/// clamped eigenvalues.
pub fn sym_sqrt(a: MatRef<'_, f64>) -> Result<(Mat<f64>, usize)> {
    check_square(a)?;
    check_symmetric(a)?;
    let (mut values, vectors) = linalg::symmetric_eigen(a, true)?;
    let clamped = clamp_spectrum(&mut values, "matrix")?;
    let v = vectors.expect("eigenvectors requested");
    let roots: Vec<f64> = values.iter().map(|l| l.sqrt()).collect();
    let scaled = Mat::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * roots[j]);
    let mut out = linalg::product(scaled.as_ref(), v.transpose());
    symmetrize(&mut out);
    Ok((out, clamped))
}

fn check_square(a: MatRef<'_, f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!("matrix is {}x{}, not square", a.nrows(), a.ncols())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqrtTrace {
    pub trace: f64,
    pub clamped: usize,
}

/// `Tr (Σ1 Σ2)^½` from the eigenvalues of `Σ1^½ Σ2 Σ1^½`.
///
/// With `Σ1 = V Λ Vᵀ`, that matrix is orthogonally similar to
/// `Λ^½ (Vᵀ Σ2 V) Λ^½`, which is what gets decomposed; `Σ1^½` itself is never
/// formed.
pub fn sym_sqrt_trace(sigma1: MatRef<'_, f64>, sigma2: MatRef<'_, f64>) -> Result<SqrtTrace> {
    check_square(sigma1)?;
    check_square(sigma2)?;
    if sigma1.nrows() != sigma2.nrows() {
        return Err(Error::Shape(format!(
            "covariances have dimensions {} and {}",
            sigma1.nrows(),
            sigma2.nrows()
        )));
    }
    check_symmetric(sigma1)?;
    check_symmetric(sigma2)?;

    let (mut lambda, vectors) = linalg::symmetric_eigen(sigma1, true)?;
    let mut clamped = clamp_spectrum(&mut lambda, "first covariance")?;
    let v = vectors.expect("eigenvectors requested");
    let roots: Vec<f64> = lambda.iter().map(|l| l.sqrt()).collect();

    let rotated = linalg::product(linalg::product(v.transpose(), sigma2).as_ref(), v.as_ref());
    let inner = Mat::from_fn(rotated.nrows(), rotated.ncols(), |i, j| {
        roots[i] * rotated[(i, j)] * roots[j]
    });
    let (mut mu, _) = linalg::symmetric_eigen(inner.as_ref(), false)?;
    clamped += clamp_spectrum(&mut mu, "covariance product")?;
    let trace = mu.iter().map(|m| m.sqrt()).sum();
    Ok(SqrtTrace { trace, clamped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrechetResult {
    pub value: f64,
    /// `‖μ1 − μ2‖²`
    pub mean_term: f64,
    /// `Tr(Σ1 + Σ2 − 2 (Σ1 Σ2)^½)`
    pub trace_term: f64,
    pub clamped_eigs: usize,
    /// Set when a slightly negative total was replaced by zero.
    #[serde(default)]
    pub total_clamped: bool,
}

pub fn frechet_distance(g1: &GaussianStats, g2: &GaussianStats) -> Result<FrechetResult> {
    if g1.dim() != g2.dim() {
        return Err(Error::Shape(format!(
            "statistics have dimensions {} and {}",
            g1.dim(),
            g2.dim()
        )));
    }
    let mean_term: f64 = g1
        .mean
        .iter()
        .zip(&g2.mean)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let traces = linalg::trace(g1.cov()) + linalg::trace(g2.cov());
    let cross = sym_sqrt_trace(g1.cov(), g2.cov())?;
    let trace_term = traces - 2.0 * cross.trace;
    let mut value = mean_term + trace_term;
    let mut total_clamped = false;
    if value < 0.0 {
        let tolerance = NEGATIVE_TOTAL_TOL * traces.max(1.0);
        if value < -tolerance {
            return Err(Error::Data(format!(
                "Fréchet distance evaluated to {value:e}, beyond round-off tolerance {tolerance:e}"
            )));
        }
        value = 0.0;
        total_clamped = true;
    }
    Ok(FrechetResult {
        value,
        mean_term,
        trace_term,
        clamped_eigs: cross.clamped,
        total_clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(values: &[f64]) -> Mat<f64> {
        Mat::from_fn(values.len(), values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    #[test]
    fn fit_two_points() {
        let set = EmbeddingSet::from_rows(&[vec![0.0, 0.0], vec![2.0, 2.0]], "s", "e").unwrap();
        let g = fit_gaussian(&set).unwrap();
        assert_eq!(g.mean(), &[1.0, 1.0]);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(g.cov()[(i, j)], 2.0);
            }
        }
    }

    #[test]
    fn fit_identical_rows_has_zero_covariance() {
        let set = EmbeddingSet::from_rows(&vec![vec![3.0, -1.0, 0.5]; 4], "s", "e").unwrap();
        let g = fit_gaussian(&set).unwrap();
        assert_eq!(linalg::max_abs(g.cov()), 0.0);
    }

    #[test]
    fn fit_needs_two_rows() {
        let set = EmbeddingSet::from_rows(&[vec![1.0]], "s", "e").unwrap();
        assert!(matches!(fit_gaussian(&set), Err(Error::Range(_))));
    }

    #[test]
    fn sqrt_trace_identity_and_commuting() {
        let id = diag(&[1.0, 1.0, 1.0]);
        let r = sym_sqrt_trace(id.as_ref(), id.as_ref()).unwrap();
        assert!((r.trace - 3.0).abs() < 1e-14);
        assert_eq!(r.clamped, 0);
        let r = sym_sqrt_trace(diag(&[1.0, 4.0]).as_ref(), diag(&[9.0, 16.0]).as_ref()).unwrap();
        assert!((r.trace - 11.0).abs() < 1e-12);
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let a = Mat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { 0.5 } else if i == j { 1.0 } else { 0.0 });
        assert!(matches!(sym_sqrt_trace(a.as_ref(), a.as_ref()), Err(Error::Data(_))));
        assert!(matches!(GaussianStats::new(vec![0.0, 0.0], a, 3), Err(Error::Data(_))));
    }

    #[test]
    fn indefinite_input_is_rejected() {
        let a = diag(&[1.0, -0.5]);
        assert!(matches!(sym_sqrt(a.as_ref()), Err(Error::Data(_))));
    }

    #[test]
    fn round_off_negatives_are_clamped_and_counted() {
        let a = diag(&[2.0, -1e-12, 0.0]);
        let (root, clamped) = sym_sqrt(a.as_ref()).unwrap();
        assert_eq!(clamped, 1);
        assert!((root[(0, 0)] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(root[(1, 1)], 0.0);
    }

    #[test]
    fn scalar_closed_form() {
        let g1 = GaussianStats::new(vec![0.0], diag(&[1.0]), 10).unwrap();
        let g2 = GaussianStats::new(vec![3.0], diag(&[4.0]), 10).unwrap();
        let r = frechet_distance(&g1, &g2).unwrap();
        assert!((r.value - 10.0).abs() < 1e-12);
        assert_eq!(r.mean_term, 9.0);
        assert!((r.trace_term - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let g1 = GaussianStats::new(vec![0.0], diag(&[1.0]), 10).unwrap();
        let g2 = GaussianStats::new(vec![0.0, 0.0], diag(&[1.0, 1.0]), 10).unwrap();
        assert!(matches!(frechet_distance(&g1, &g2), Err(Error::Shape(_))));
    }

    #[test]
    fn self_distance_is_zero() {
        let cov = Mat::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.3 });
        let g = GaussianStats::new(vec![1.0, 2.0, 3.0], cov, 5).unwrap();
        let r = frechet_distance(&g, &g).unwrap();
        assert!(r.value.abs() <= 1e-12, "{r:?}");
    }
}
