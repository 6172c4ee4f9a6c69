//! Fisher information of the unquantized receiver and the pessimistic
//! (moment-based) Fisher bound of the sign-quantized receiver.
//!
//! The bound uses the sign samples themselves as the auxiliary statistic:
//! their mean, covariance and mean Jacobian are available in closed form
//! through the Gaussian tail and the bivariate normal CDF.

use std::sync::OnceLock;

use faer::{Mat, MatRef};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{factor_psd, PsdFactor};
use crate::noise::{psd_solve, NoiseCov};
use crate::signal::SignalEval;
use crate::special::{bvn_lower, q_function, std_normal_pdf, AccuracyPolicy};

/// Eigenvalues of the sign covariance below `-NEG_EIG_TOL` mean the moments
/// are inconsistent.
pub const NEG_EIG_TOL: f64 = 1e-6;

/// 2x2 information matrix over `[gamma, tau]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix {
    pub entries: [[f64; 2]; 2],
}

impl FisherMatrix {
    pub fn new(entries: [[f64; 2]; 2]) -> Self {
        Self { entries }
    }

    /// `J^T X` symmetrized, for `X` a solve of the weighting matrix against `J`.
    fn from_product(jac: MatRef<'_, f64>, solved: MatRef<'_, f64>) -> Self {
        let g = jac.transpose() * solved;
        let off = 0.5 * (g[(0, 1)] + g[(1, 0)]);
        Self::new([[g[(0, 0)], off], [off, g[(1, 1)]]])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn determinant(&self) -> f64 {
        let [[a, b], [c, d]] = self.entries;
        a * d - b * c
    }

    /// Inverse (the CRLB matrix); fails when singular at working precision.
    pub fn inverse(&self) -> Result<[[f64; 2]; 2]> {
        let [[a, b], [c, d]] = self.entries;
        let det = self.determinant();
        let scale = (a * d).abs().max((b * c).abs());
        if !(det.is_finite() && det.abs() > 1e-13 * scale && scale > 0.0) {
            return Err(Error::numerical(format!("Fisher matrix is singular (det = {det:.3e})")));
        }
        Ok([[d / det, -b / det], [-c / det, a / det]])
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, d]] = self.entries;
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [mean - rad, mean + rad]
    }

    pub fn sub(&self, other: &FisherMatrix) -> FisherMatrix {
        let mut e = self.entries;
        for (i, row) in e.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v -= other.entries[i][j];
            }
        }
        FisherMatrix::new(e)
    }
}

/// Ideal-receiver information `(ds/dtheta)^T R^+ (ds/dtheta)`.
pub fn fisher_ideal(sig: &SignalEval, cov: &NoiseCov) -> Result<FisherMatrix> {
    check_dims(sig, cov)?;
    let solved = psd_solve(cov, sig.jacobian.as_ref())?;
    Ok(FisherMatrix::from_product(sig.jacobian.as_ref(), solved.as_ref()))
}

fn check_dims(sig: &SignalEval, cov: &NoiseCov) -> Result<()> {
    if sig.len() != cov.n() {
        return Err(Error::domain(format!(
            "signal has {} samples but covariance is {}x{}",
            sig.len(),
            cov.n(),
            cov.n()
        )));
    }
    Ok(())
}

/// Mean of the sign samples, `mu_i = 1 - 2 Q(s_i / sqrt(R_ii))`.
pub fn quantized_mean(sig: &SignalEval, cov: &NoiseCov) -> Vec<f64> {
    let sd = cov.lag(0).sqrt();
    sig.s.iter().map(|&s| 1.0 - 2.0 * q_function(s / sd)).collect()
}

/// Jacobian of the sign-sample mean,
/// `2 phi(s_i / sqrt(R_ii)) / sqrt(R_ii) * (ds/dtheta)_ij`.
pub fn quantized_mean_jacobian(sig: &SignalEval, cov: &NoiseCov) -> Mat<f64> {
    let sd = cov.lag(0).sqrt();
    Mat::from_fn(sig.len(), 2, |i, j| 2.0 * std_normal_pdf(sig.s[i] / sd) / sd * sig.jacobian[(i, j)])
}

/// Covariance of the sign samples with its pseudo-inverse factorization.
#[derive(Debug)]
pub struct QuantizedCov {
    mat: Mat<f64>,
    eig_floor: f64,
    factor: OnceLock<Result<PsdFactor>>,
}

impl QuantizedCov {
    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.mat.as_ref()
    }

    pub fn n(&self) -> usize {
        self.mat.nrows()
    }

    /// Factorization under the same pseudo-inverse policy as the noise
    /// covariance, computed once.
    pub fn factor(&self) -> Result<&PsdFactor> {
        self.factor
            .get_or_init(|| factor_psd(self.mat.as_ref(), self.eig_floor, NEG_EIG_TOL))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn solve(&self, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
        Ok(self.factor()?.solve(rhs))
    }
}

/// Covariance of the sign samples:
/// `[R_z]_ii = 1 - mu_i^2`, `[R_z]_ij = 4 Phi2(-s_i, -s_j; rho_ij) - (1 - mu_i)(1 - mu_j)`.
///
/// The off-diagonal term is evaluated as `4 (Phi2 - Q(s_i) Q(s_j))`, which is
/// the same quantity without the cancellation. For `s_i < 0` the sample's
/// sign event is replaced by its complement, which flips the sign of the
/// entry but keeps every probability a small tail, so nothing cancels when
/// `Q(s_i)` is close to one. Entries at exactly zero noise
/// correlation are exactly zero. Each entry depends only on its own inputs,
/// so the parallel fill is order independent.
pub fn quantized_cov(sig: &SignalEval, cov: &NoiseCov) -> Result<QuantizedCov> {
    quantized_cov_with(sig, cov, &AccuracyPolicy::default())
}

pub fn quantized_cov_with(sig: &SignalEval, cov: &NoiseCov, policy: &AccuracyPolicy) -> Result<QuantizedCov> {
    let qc = build_quantized_cov(sig, cov, policy)?;
    qc.factor()?;
    Ok(qc)
}

fn build_quantized_cov(sig: &SignalEval, cov: &NoiseCov, policy: &AccuracyPolicy) -> Result<QuantizedCov> {
    check_dims(sig, cov)?;
    policy.validate()?;
    let n = sig.len();
    let sd = cov.lag(0).sqrt();
    // side[i] = +1 tracks {y_i < 0}, -1 its complement; h is the standardized
    // threshold of the tracked event, always <= 0
    let side: Vec<f64> = sig.s.iter().map(|&s| if s >= 0.0 { 1.0 } else { -1.0 }).collect();
    let h: Vec<f64> = sig.s.iter().map(|&s| -s.abs() / sd).collect();
    let tail: Vec<f64> = sig.s.iter().map(|&s| q_function(s.abs() / sd)).collect();
    let clamp = policy.rho_clamp;

    let mut mat = Mat::<f64>::zeros(n, n);
    mat.par_col_iter_mut().enumerate().for_each(|(j, mut col)| {
        col[j] = 4.0 * tail[j] * (1.0 - tail[j]);
        for i in j + 1..n {
            let rho = cov.lag(i - j) / cov.lag(0);
            col[i] = if rho == 0.0 {
                0.0
            } else {
                let sign = side[i] * side[j];
                let rho = (sign * rho).clamp(-clamp, clamp);
                4.0 * sign * (bvn_lower(h[i], h[j], rho) - tail[i] * tail[j])
            };
        }
    });
    for j in 1..n {
        for i in 0..j {
            mat[(i, j)] = mat[(j, i)];
        }
    }
    Ok(QuantizedCov {
        mat,
        eig_floor: cov.eig_floor(),
        factor: OnceLock::new(),
    })
}

/// Mean, covariance and mean Jacobian of the sign samples.
#[derive(Debug)]
pub struct QuantizedMoments {
    pub mu: Vec<f64>,
    pub cov: QuantizedCov,
    pub mu_jacobian: Mat<f64>,
}

pub fn quantized_moments(sig: &SignalEval, cov: &NoiseCov) -> Result<QuantizedMoments> {
    Ok(QuantizedMoments {
        mu: quantized_mean(sig, cov),
        cov: quantized_cov(sig, cov)?,
        mu_jacobian: quantized_mean_jacobian(sig, cov),
    })
}

/// Pessimistic Fisher bound `(dmu/dtheta)^T R_z^+ (dmu/dtheta)`.
pub fn fisher_1bit_bound(moments: &QuantizedMoments) -> Result<FisherMatrix> {
    if moments.mu_jacobian.nrows() != moments.cov.n() {
        return Err(Error::domain("mean Jacobian and covariance dimensions differ"));
    }
    let solved = moments.cov.solve(moments.mu_jacobian.as_ref())?;
    Ok(FisherMatrix::from_product(moments.mu_jacobian.as_ref(), solved.as_ref()))
}

/// Quantization losses in dB: ratios of the ideal CRLB diagonal to the
/// bound-based CRLB diagonal, `(chi_gamma_db, chi_tau_db)`.
pub fn loss_ratios(f_ideal: &FisherMatrix, f_bound: &FisherMatrix) -> Result<(f64, f64)> {
    let ideal = f_ideal.inverse()?;
    let bound = f_bound.inverse()?;
    let db = |r: f64| 10.0 * r.log10();
    Ok((db(ideal[0][0] / bound[0][0]), db(ideal[1][1] / bound[1][1])))
}

/// Quantization loss at one (SNR, oversampling) point. A point whose
/// computation failed carries the error text and NaN losses.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPoint {
    pub snr_db: f64,
    pub kappa: u32,
    pub chi_gamma_db: f64,
    pub chi_tau_db: f64,
    pub error: Option<String>,
}

impl LossPoint {
    pub fn ok(snr_db: f64, kappa: u32, chi_gamma_db: f64, chi_tau_db: f64) -> Self {
        Self { snr_db, kappa, chi_gamma_db, chi_tau_db, error: None }
    }

    pub fn failed(snr_db: f64, kappa: u32, err: &Error) -> Self {
        Self {
            snr_db,
            kappa,
            chi_gamma_db: f64::NAN,
            chi_tau_db: f64::NAN,
            error: Some(err.to_string()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.error.is_none()
    }
}

/// Both information matrices and the resulting losses for one signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub ideal: FisherMatrix,
    pub bound: FisherMatrix,
    pub chi_gamma_db: f64,
    pub chi_tau_db: f64,
}

pub fn bound_pair(sig: &SignalEval, cov: &NoiseCov) -> Result<BoundPair> {
    let ideal = fisher_ideal(sig, cov)?;
    let moments = quantized_moments(sig, cov)?;
    let bound = fisher_1bit_bound(&moments)?;
    let (chi_gamma_db, chi_tau_db) = loss_ratios(&ideal, &bound)?;
    Ok(BoundPair { ideal, bound, chi_gamma_db, chi_tau_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::build_covariance;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn flat_signal(n: usize, level: f64) -> SignalEval {
        let jac = Mat::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 + 1.0) * 0.1 });
        SignalEval::from_parts(1.0, 0.0, vec![level; n], jac).unwrap()
    }

    #[test]
    fn mean_reference_values() {
        let cov = build_covariance(3, 1).unwrap();
        let sig = SignalEval::from_parts(1.0, 0.0, vec![0.0, 1.0, 40.0], Mat::zeros(3, 2)).unwrap();
        let mu = quantized_mean(&sig, &cov);
        assert_eq!(mu[0], 0.0);
        assert_abs_diff_eq!(mu[1], 0.682_689_492_137, epsilon = 1e-12);
        assert_eq!(mu[2], 1.0);
    }

    #[test]
    fn mean_jacobian_at_zero_signal() {
        let cov = build_covariance(4, 2).unwrap();
        let sig = flat_signal(4, 0.0);
        let jm = quantized_mean_jacobian(&sig, &cov);
        let factor = 2.0 / (2.0 * PI).sqrt();
        for i in 0..4 {
            for j in 0..2 {
                assert_abs_diff_eq!(jm[(i, j)], factor * sig.jacobian[(i, j)], epsilon = 1e-15);
            }
        }
        let saturated = flat_signal(2, 60.0);
        let jm = quantized_mean_jacobian(&saturated, &build_covariance(2, 1).unwrap());
        assert_eq!(jm[(0, 0)], 0.0);
    }

    #[test]
    fn zero_signal_covariance_is_arcsine_law() {
        let cov = build_covariance(6, 3).unwrap();
        let sig = flat_signal(6, 0.0);
        let qc = quantized_cov(&sig, &cov).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let expected = 2.0 / PI * cov.entry(i, j).asin();
                assert_abs_diff_eq!(qc.matrix()[(i, j)], expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn uncorrelated_noise_gives_diagonal_sign_covariance() {
        let cov = build_covariance(5, 1).unwrap();
        let sig = SignalEval::from_parts(1.0, 0.0, vec![0.3, -1.2, 0.8, 2.0, -0.1], Mat::zeros(5, 2)).unwrap();
        let qc = quantized_cov(&sig, &cov).unwrap();
        let mu = quantized_mean(&sig, &cov);
        for i in 0..5 {
            for j in 0..5 {
                let expected = if i == j { 1.0 - mu[i] * mu[i] } else { 0.0 };
                assert_abs_diff_eq!(qc.matrix()[(i, j)], expected, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn loss_of_identical_matrices_is_zero() {
        let f = FisherMatrix::new([[3.0, 0.5], [0.5, 2.0]]);
        let (g, t) = loss_ratios(&f, &f).unwrap();
        assert_abs_diff_eq!(g, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(t, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_fisher_is_rejected() {
        let f = FisherMatrix::new([[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(f.inverse(), Err(Error::Numerical(_))));
        let ok = FisherMatrix::new([[2.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(loss_ratios(&ok, &f), Err(Error::Numerical(_))));
    }

    #[test]
    fn dimension_mismatch_is_domain_error() {
        let cov = build_covariance(3, 1).unwrap();
        let sig = flat_signal(4, 0.1);
        assert!(matches!(fisher_ideal(&sig, &cov), Err(Error::Domain(_))));
        assert!(matches!(quantized_cov(&sig, &cov), Err(Error::Domain(_))));
    }
}
