//! Symmetric positive-semidefinite solves shared by the noise covariance and
//! the sign-sample covariance.
//!
//! The solve semantics are those of the eigenvalue-thresholded
//! pseudo-inverse: directions whose eigenvalue falls below
//! `eig_floor * lambda_max` are suppressed. A Cholesky factor is used in
//! place of the eigendecomposition only when the matrix is far enough from
//! that floor that both routes coincide to rounding.

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Default relative eigenvalue floor for pseudo-inversion.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-10;

/// A Cholesky factor is trusted only if the estimated smallest eigenvalue
/// exceeds the pseudo-inverse floor by this factor.
const CHOLESKY_MARGIN: f64 = 1e4;

const INVERSE_ITERATIONS: usize = 25;

/// Eigendecomposition restricted to the retained eigenspace.
#[derive(Debug, Clone)]
pub struct SpectralFactor {
    /// Retained eigenvectors as columns, `n x r`.
    vectors: Mat<f64>,
    /// Retained eigenvalues, ascending.
    values: Vec<f64>,
    /// Every eigenvalue of the matrix, ascending.
    spectrum: Vec<f64>,
    cutoff: f64,
}

impl SpectralFactor {
    pub fn new(mat: MatRef<'_, f64>, eig_floor: f64) -> Result<Self> {
        let n = mat.nrows();
        let evd = mat
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::numerical(format!("eigendecomposition failed: {e:?}")))?;
        let spectrum: Vec<f64> = evd.S().column_vector().iter().copied().collect();
        let lambda_max = spectrum.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if !lambda_max.is_finite() {
            return Err(Error::numerical("non-finite eigenvalues"));
        }
        let cutoff = eig_floor * lambda_max;
        let keep: Vec<usize> = (0..n).filter(|&i| spectrum[i] > cutoff).collect();
        let u = evd.U();
        let vectors = Mat::from_fn(n, keep.len(), |i, j| u[(i, keep[j])]);
        let values = keep.iter().map(|&i| spectrum[i]).collect();
        Ok(Self { vectors, values, spectrum, cutoff })
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn retained_values(&self) -> &[f64] {
        &self.values
    }

    pub fn retained_vectors(&self) -> MatRef<'_, f64> {
        self.vectors.as_ref()
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// `V diag(1/lambda) V^T rhs` over the retained eigenspace.
    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        let mut coeffs = self.vectors.transpose() * rhs;
        for (r, &lambda) in self.values.iter().enumerate() {
            for c in 0..coeffs.ncols() {
                coeffs[(r, c)] /= lambda;
            }
        }
        &self.vectors * &coeffs
    }
}

/// Factorization used to apply the pseudo-inverse of a symmetric PSD matrix.
#[derive(Debug)]
pub enum PsdFactor {
    /// The matrix is the identity.
    Identity(usize),
    /// Cholesky factor of a matrix whose spectrum sits well above the floor.
    Cholesky(faer::linalg::solvers::Llt<f64>),
    /// Thresholded eigendecomposition.
    Spectral(SpectralFactor),
}

impl PsdFactor {
    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        match self {
            PsdFactor::Identity(_) => rhs.to_owned(),
            PsdFactor::Cholesky(llt) => llt.solve(rhs),
            PsdFactor::Spectral(spec) => spec.solve(rhs),
        }
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, PsdFactor::Spectral(_))
    }
}

/// Upper bound on the largest eigenvalue magnitude (max absolute row sum).
pub fn gershgorin_bound(mat: MatRef<'_, f64>) -> f64 {
    let n = mat.nrows();
    let mut sums = vec![0.0f64; n];
    for j in 0..mat.ncols() {
        for (i, s) in sums.iter_mut().enumerate() {
            *s += mat[(i, j)].abs();
        }
    }
    sums.into_iter().fold(0.0, f64::max)
}

/// Factor a symmetric PSD matrix for pseudo-inverse solves.
///
/// Tries Cholesky first and keeps it when inverse iteration shows the
/// smallest eigenvalue is at least `CHOLESKY_MARGIN * eig_floor` times the
/// Gershgorin bound; otherwise falls back to the thresholded spectral
/// factor. On the spectral route, eigenvalues below `-neg_tol` are reported
/// as a [`Error::Numerical`].
pub fn factor_psd(mat: MatRef<'_, f64>, eig_floor: f64, neg_tol: f64) -> Result<PsdFactor> {
    let n = mat.nrows();
    if n != mat.ncols() {
        return Err(Error::domain("matrix must be square"));
    }
    if let Ok(llt) = mat.llt(Side::Lower) {
        let lambda_bound = gershgorin_bound(mat);
        let lambda_min = smallest_eigenvalue_estimate(mat, &llt);
        if lambda_min >= CHOLESKY_MARGIN * eig_floor * lambda_bound {
            return Ok(PsdFactor::Cholesky(llt));
        }
        log::debug!(
            "cholesky rejected: lambda_min ~ {lambda_min:.3e}, lambda_max <= {lambda_bound:.3e}; using spectral factor"
        );
    }
    let spec = SpectralFactor::new(mat, eig_floor)?;
    let min = spec.spectrum().first().copied().unwrap_or(0.0);
    if min < -neg_tol {
        return Err(Error::numerical(format!(
            "matrix is not positive semidefinite: smallest eigenvalue {min:.3e}"
        )));
    }
    Ok(PsdFactor::Spectral(spec))
}

/// Rayleigh-quotient estimate of the smallest eigenvalue by inverse
/// iteration on an existing Cholesky factor.
fn smallest_eigenvalue_estimate(mat: MatRef<'_, f64>, llt: &faer::linalg::solvers::Llt<f64>) -> f64 {
    let n = mat.nrows();
    let mut v = Mat::from_fn(n, 1, |i, _| 1.0 + 0.5 * (i as f64 * 0.618_033_988_7).sin());
    normalize(&mut v);
    let mut estimate = f64::INFINITY;
    for _ in 0..INVERSE_ITERATIONS {
        let mut w = llt.solve(v.as_ref());
        // v^T R^{-1} v is a lower bound on 1/lambda_min
        let quotient: f64 = (0..n).map(|i| v[(i, 0)] * w[(i, 0)]).sum();
        let next = 1.0 / quotient;
        normalize(&mut w);
        v = w;
        let converged = (estimate - next).abs() <= 1e-3 * next.abs();
        estimate = next;
        if converged {
            break;
        }
    }
    estimate
}

fn normalize(v: &mut Mat<f64>) {
    let norm = (0..v.nrows()).map(|i| v[(i, 0)] * v[(i, 0)]).sum::<f64>().sqrt();
    for i in 0..v.nrows() {
        v[(i, 0)] /= norm;
    }
}
