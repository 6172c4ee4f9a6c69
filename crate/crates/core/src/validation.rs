//! Independent checks of the bound machinery: Monte Carlo moments of the
//! sign samples, exact Fisher information for one and two samples, an
//! ideal-receiver ML estimator against its CRLB, and finite-difference
//! Jacobian checks.

use faer::Mat;

use crate::error::{Error, Result};
use crate::fisher::{
    fisher_1bit_bound, fisher_ideal, quantized_cov, quantized_mean, quantized_mean_jacobian, quantized_moments,
    FisherMatrix,
};
use crate::noise::{build_covariance, psd_solve, NoiseCov, NoiseSampler};
use crate::signal::{pilot_value_and_derivative, ChannelParams, PilotConfig, PilotSamples, SignalEval};
use crate::special::{bivariate_normal_cdf, normal_cdf, std_normal_pdf};

/// Outcome of [`mc_moment_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub draws: usize,
    /// Largest `|empirical - analytic|` over the sign-sample means.
    pub max_abs_z_mean_err: f64,
    /// Largest `|empirical - analytic|` over the off-diagonal covariances.
    /// The diagonal is a function of the mean (`z^2 = 1`) and is not repeated.
    pub max_abs_z_cov_err: f64,
    /// Largest standard error among the mean estimates.
    pub mean_std_error: f64,
    /// Largest standard error among the covariance estimates.
    pub cov_std_error: f64,
    /// Largest deviation in units of its own standard error, means.
    pub max_mean_score: f64,
    /// Largest deviation in units of its own standard error, covariances.
    pub max_cov_score: f64,
}

impl McReport {
    /// True when every entry lies within `k` of its standard errors.
    pub fn within(&self, k: f64) -> bool {
        self.max_mean_score <= k && self.max_cov_score <= k
    }
}

/// Simulates `z = sign(s + eta)` on the first `n_sub` receive samples and
/// compares the empirical moments to the closed forms.
pub fn mc_moment_check(
    cfg: &PilotConfig,
    theta: &ChannelParams,
    n_sub: usize,
    draws: usize,
    seed: u64,
) -> Result<McReport> {
    if n_sub == 0 || n_sub > cfg.n_samples() {
        return Err(Error::domain(format!(
            "n_sub must lie in 1..={} for this configuration",
            cfg.n_samples()
        )));
    }
    if draws < 10_000 {
        return Err(Error::domain("Monte Carlo moment check needs at least 10^4 draws"));
    }
    let samples = PilotSamples::new(cfg, theta.tau)?.truncated(n_sub);
    let sig = SignalEval::from_samples(&samples, theta.gamma);
    let cov = build_covariance(n_sub, cfg.kappa())?;
    moment_check_for_signal(&sig, &cov, draws, seed)
}

/// [`mc_moment_check`] on an explicit signal vector.
pub fn moment_check_for_signal(sig: &SignalEval, cov: &NoiseCov, draws: usize, seed: u64) -> Result<McReport> {
    let n = sig.len();
    let mu = quantized_mean(sig, cov);
    let rz = quantized_cov(sig, cov)?;
    let mut sampler = NoiseSampler::new(cov, seed)?;

    // first pass: means
    let mut noise = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut sum = vec![0.0; n];
    let mut sum_prod = vec![0.0; n * n];
    for d in 0..draws {
        sampler.fill(d as u64, &mut noise);
        for i in 0..n {
            z[i] = if sig.s[i] + noise[i] >= 0.0 { 1.0 } else { -1.0 };
            sum[i] += z[i];
        }
        for i in 0..n {
            for j in 0..i {
                sum_prod[i * n + j] += z[i] * z[j];
            }
        }
    }
    let nd = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / nd).collect();

    // second pass: spread of the centered products, for the covariance SEs
    let mut sum_sq = vec![0.0; n * n];
    for d in 0..draws {
        sampler.fill(d as u64, &mut noise);
        for i in 0..n {
            z[i] = if sig.s[i] + noise[i] >= 0.0 { 1.0 } else { -1.0 };
        }
        for i in 0..n {
            for j in 0..i {
                let c = (z[i] - mean[i]) * (z[j] - mean[j]);
                sum_sq[i * n + j] += c * c;
            }
        }
    }

    let mut report = McReport {
        draws,
        max_abs_z_mean_err: 0.0,
        max_abs_z_cov_err: 0.0,
        mean_std_error: 0.0,
        cov_std_error: 0.0,
        max_mean_score: 0.0,
        max_cov_score: 0.0,
    };
    for i in 0..n {
        let err = (mean[i] - mu[i]).abs();
        let se = ((1.0 - mean[i] * mean[i]).max(0.0) / nd).sqrt();
        report.max_abs_z_mean_err = report.max_abs_z_mean_err.max(err);
        report.mean_std_error = report.mean_std_error.max(se);
        report.max_mean_score = report.max_mean_score.max(score(err, se));
    }
    let rz = rz.matrix();
    for i in 0..n {
        for j in 0..i {
            let emp = sum_prod[i * n + j] / nd - mean[i] * mean[j];
            let second = sum_sq[i * n + j] / nd;
            let se = ((second - emp * emp).max(0.0) / nd).sqrt();
            let err = (emp - rz[(i, j)]).abs();
            report.max_abs_z_cov_err = report.max_abs_z_cov_err.max(err);
            report.cov_std_error = report.cov_std_error.max(se);
            report.max_cov_score = report.max_cov_score.max(score(err, se));
        }
    }
    Ok(report)
}

fn score(err: f64, se: f64) -> f64 {
    if se > 0.0 {
        err / se
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Exact Fisher information of a single sign sample,
/// `(dp/dtheta)(dp/dtheta)^T / (p (1 - p))` with `p = P(z = +1) = Phi(s)`.
pub fn exact_fisher_single(s: f64, ds_dtheta: [f64; 2]) -> FisherMatrix {
    let p = normal_cdf(s);
    let dens = std_normal_pdf(s);
    let w = dens * dens / (p * normal_cdf(-s));
    let [a, b] = ds_dtheta;
    FisherMatrix::new([[w * a * a, w * a * b], [w * a * b, w * b * b]])
}

/// Two receive samples `lag` grid points apart on a `kappa`-oversampled grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCase {
    pub gamma: f64,
    pub s: [f64; 2],
    /// Rows are samples, columns `[d/dgamma, d/dtau]`.
    pub jacobian: [[f64; 2]; 2],
    pub kappa: u32,
    pub lag: usize,
}

impl PairCase {
    /// Samples `start` and `start + lag` of the pilot under `theta`.
    pub fn from_pilot(cfg: &PilotConfig, theta: &ChannelParams, start: usize, lag: usize) -> Result<Self> {
        if lag == 0 {
            return Err(Error::domain("sample pair needs a nonzero lag"));
        }
        let ts = cfg.sample_period();
        let mut s = [0.0; 2];
        let mut jacobian = [[0.0; 2]; 2];
        for (slot, idx) in [start, start + lag].into_iter().enumerate() {
            let (x, dx) = pilot_value_and_derivative(idx as f64 * ts - theta.tau, cfg)?;
            s[slot] = theta.gamma * x;
            jacobian[slot] = [x, -theta.gamma * dx];
        }
        Ok(Self { gamma: theta.gamma, s, jacobian, kappa: cfg.kappa(), lag })
    }

    pub fn rho(&self) -> f64 {
        crate::special::sinc(self.lag as f64 / f64::from(self.kappa))
    }

    fn signal(&self) -> Result<SignalEval> {
        let jac = Mat::from_fn(2, 2, |i, j| self.jacobian[i][j]);
        SignalEval::from_parts(self.gamma, 0.0, self.s.to_vec(), jac)
    }
}

/// Result of [`exact_bound_check_n2`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairReport {
    /// `P(z = (-,-)), P(-,+), P(+,-), P(+,+)`.
    pub probabilities: [f64; 4],
    pub exact: FisherMatrix,
    pub bound: FisherMatrix,
    /// Smallest eigenvalue of `exact - bound` after scaling both parameters
    /// so that `exact` has a unit diagonal.
    pub min_gap_eigenvalue: f64,
    pub holds: bool,
}

/// Smallest eigenvalue allowed for `F_exact - F_bound` before the sandwich
/// is declared violated.
pub const SANDWICH_TOL: f64 = -1e-6;

// each orthant directly, P(a z1 > 0, b z2 > 0) = Phi2(a s1, b s2; a b rho),
// so no outcome is a difference of numbers close to one
fn pair_probabilities(s: [f64; 2], rho: f64) -> Result<[f64; 4]> {
    let mut out = [0.0; 4];
    for (slot, (a, b)) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)].into_iter().enumerate() {
        out[slot] = bivariate_normal_cdf(a * s[0], b * s[1], a * b * rho)?;
    }
    Ok(out)
}

// smallest eigenvalue of D^-1/2 (exact - bound) D^-1/2 with D = diag(exact),
// so the floor does not depend on the units of gamma and tau
fn scaled_gap(exact: &FisherMatrix, bound: &FisherMatrix) -> f64 {
    let d = [exact.get(0, 0), exact.get(1, 1)];
    let w = d.map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 });
    let gap = exact.sub(bound);
    let mut e = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            e[a][b] = w[a] * gap.get(a, b) * w[b];
        }
    }
    FisherMatrix::new(e).eigenvalues()[0]
}

/// Exact two-sample Fisher information from the four outcome probabilities,
/// differentiated in closed form, against the pessimistic bound.
pub fn exact_bound_check_n2(case: &PairCase) -> Result<PairReport> {
    if case.kappa < 2 {
        return Err(Error::domain("the pair check needs kappa >= 2"));
    }
    let rho = case.rho();
    let probabilities = pair_probabilities(case.s, rho)?;
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::numerical(format!("outcome probabilities sum to {total}")));
    }

    // d Phi2(x, y; r) / dx = phi(x) Phi((y - r x) / sqrt(1 - r^2))
    let c = (1.0 - rho * rho).sqrt();
    let mut grads = [[0.0; 2]; 4];
    for (o, (a, b)) in [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)].into_iter().enumerate() {
        let d0 = a * std_normal_pdf(case.s[0]) * normal_cdf(b * (case.s[1] - rho * case.s[0]) / c);
        let d1 = b * std_normal_pdf(case.s[1]) * normal_cdf(a * (case.s[0] - rho * case.s[1]) / c);
        for param in 0..2 {
            grads[o][param] = d0 * case.jacobian[0][param] + d1 * case.jacobian[1][param];
        }
    }
    let mut exact = [[0.0; 2]; 2];
    for (o, g) in grads.iter().enumerate() {
        let p = probabilities[o];
        if p <= 0.0 {
            continue;
        }
        for a in 0..2 {
            for b in 0..2 {
                exact[a][b] += g[a] * g[b] / p;
            }
        }
    }
    let exact = FisherMatrix::new(exact);

    let sig = case.signal()?;
    let cov = NoiseCov::with_spacing(2, case.kappa, case.lag)?;
    let bound = fisher_1bit_bound(&quantized_moments(&sig, &cov)?)?;
    let min_gap_eigenvalue = scaled_gap(&exact, &bound);
    Ok(PairReport {
        probabilities,
        exact,
        bound,
        min_gap_eigenvalue,
        holds: min_gap_eigenvalue >= SANDWICH_TOL,
    })
}

/// Outcome of [`ideal_ml_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlReport {
    pub draws: usize,
    pub rmse_gamma: f64,
    pub rmse_tau: f64,
    /// Square roots of the CRLB diagonal from the ideal Fisher matrix.
    pub crlb_gamma: f64,
    pub crlb_tau: f64,
    /// Fraction of draws whose delay estimate sits on the search boundary.
    pub boundary_fraction: f64,
    /// Set when more than 1% of draws hit the boundary.
    pub convergence_warning: bool,
}

/// ML estimation of `(gamma, tau)` from the unquantized samples.
///
/// The delay is found by exhaustive search over `tau_true +- T_c/2` in steps
/// of `tau_grid_step`; for each candidate delay the amplitude has the
/// closed form `y^T R^+ x / x^T R^+ x`.
pub fn ideal_ml_estimate(
    cfg: &PilotConfig,
    theta_true: &ChannelParams,
    draws: usize,
    seed: u64,
    tau_grid_step: f64,
) -> Result<MlReport> {
    ideal_ml_estimate_scaled(cfg, theta_true, draws, seed, tau_grid_step, 1.0)
}

/// [`ideal_ml_estimate`] with the noise multiplied by `noise_scale`
/// (the reported CRLB stays that of unit noise).
pub fn ideal_ml_estimate_scaled(
    cfg: &PilotConfig,
    theta_true: &ChannelParams,
    draws: usize,
    seed: u64,
    tau_grid_step: f64,
    noise_scale: f64,
) -> Result<MlReport> {
    let tc = cfg.chip_period();
    if !(tau_grid_step > 0.0 && tau_grid_step <= tc / 64.0 * (1.0 + 1e-12)) {
        return Err(Error::domain("tau_grid_step must lie in (0, T_c/64]"));
    }
    if draws == 0 {
        return Err(Error::domain("need at least one draw"));
    }
    let n = cfg.n_samples();
    let cov = build_covariance(n, cfg.kappa())?;
    let truth = PilotSamples::new(cfg, theta_true.tau)?;
    let sig = SignalEval::from_samples(&truth, theta_true.gamma);
    let crlb = fisher_ideal(&sig, &cov)?.inverse()?;

    let half = (0.5 * tc / tau_grid_step).floor() as i64;
    let offsets: Vec<f64> = (-half..=half).map(|g| g as f64 * tau_grid_step).collect();
    let templates = Mat::from_fn(n, offsets.len(), |_, _| 0.0);
    let mut templates = templates;
    for (g, &off) in offsets.iter().enumerate() {
        let x = PilotSamples::new(cfg, theta_true.tau + off)?.x;
        for (i, v) in x.into_iter().enumerate() {
            templates[(i, g)] = v;
        }
    }
    let weighted = psd_solve(&cov, templates.as_ref())?;
    let energy: Vec<f64> = (0..offsets.len())
        .map(|g| (0..n).map(|i| templates[(i, g)] * weighted[(i, g)]).sum())
        .collect();

    let mut sampler = NoiseSampler::new(&cov, seed)?;
    let mut noise = vec![0.0; n];
    let mut y = vec![0.0; n];
    let (mut se_gamma, mut se_tau) = (0.0, 0.0);
    let mut boundary = 0usize;
    for d in 0..draws {
        sampler.fill(d as u64, &mut noise);
        for i in 0..n {
            y[i] = sig.s[i] + noise_scale * noise[i];
        }
        let mut best = (f64::NEG_INFINITY, 0usize, 0.0);
        for g in 0..offsets.len() {
            let corr: f64 = (0..n).map(|i| y[i] * weighted[(i, g)]).sum();
            let metric = corr * corr / energy[g];
            if metric > best.0 {
                best = (metric, g, corr / energy[g]);
            }
        }
        let (_, g, gamma_hat) = best;
        if g == 0 || g == offsets.len() - 1 {
            boundary += 1;
        }
        se_gamma += (gamma_hat - theta_true.gamma).powi(2);
        se_tau += offsets[g].powi(2);
    }
    let nd = draws as f64;
    let boundary_fraction = boundary as f64 / nd;
    let convergence_warning = boundary_fraction > 0.01;
    if convergence_warning {
        log::warn!("{:.1}% of ML delay estimates hit the search boundary", 100.0 * boundary_fraction);
    }
    Ok(MlReport {
        draws,
        rmse_gamma: (se_gamma / nd).sqrt(),
        rmse_tau: (se_tau / nd).sqrt(),
        crlb_gamma: crlb[0][0].sqrt(),
        crlb_tau: crlb[1][1].sqrt(),
        boundary_fraction,
        convergence_warning,
    })
}

/// Largest relative deviation between analytic Jacobians and central
/// differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianReport {
    /// `ds/dtheta`, both columns.
    pub signal: f64,
    /// `dmu/dtheta`, both columns.
    pub mean: f64,
    /// `ds/dgamma` alone (linear in gamma, so only rounding remains).
    pub gamma_column: f64,
}

impl JacobianReport {
    pub fn max(&self) -> f64 {
        self.signal.max(self.mean)
    }
}

/// Entries at or below this fraction of their column's largest magnitude are
/// left out of the relative error; near zeros the central difference only
/// sees rounding.
pub const JACOBIAN_RELATIVE_FLOOR: f64 = 1e-4;

/// Central-difference check of `ds/dtheta` and `dmu/dtheta` with steps
/// `1e-6 gamma` and `1e-6 T_c`.
pub fn jacobian_checks(cfg: &PilotConfig, theta: &ChannelParams) -> Result<JacobianReport> {
    jacobian_checks_with_step(cfg, theta, 1e-6)
}

/// [`jacobian_checks`] with steps `rel_step * gamma` and `rel_step * T_c`.
pub fn jacobian_checks_with_step(cfg: &PilotConfig, theta: &ChannelParams, rel_step: f64) -> Result<JacobianReport> {
    if !(rel_step > 0.0) {
        return Err(Error::domain("finite-difference step must be positive"));
    }
    let n = cfg.n_samples();
    let cov = build_covariance(n, cfg.kappa())?;
    let base = PilotSamples::new(cfg, theta.tau)?;
    let sig = SignalEval::from_samples(&base, theta.gamma);
    let mu_jac = quantized_mean_jacobian(&sig, &cov);

    let h_gamma = rel_step * theta.gamma;
    let h_tau = rel_step * cfg.chip_period();
    let shifted = |gamma: f64, samples: &PilotSamples| SignalEval::from_samples(samples, gamma);
    let plus_tau = PilotSamples::new(cfg, theta.tau + h_tau)?;
    let minus_tau = PilotSamples::new(cfg, theta.tau - h_tau)?;
    let variants = [
        (shifted(theta.gamma + h_gamma, &base), shifted(theta.gamma - h_gamma, &base), h_gamma),
        (shifted(theta.gamma, &plus_tau), shifted(theta.gamma, &minus_tau), h_tau),
    ];

    let mut report = JacobianReport { signal: 0.0, mean: 0.0, gamma_column: 0.0 };
    for (col, (plus, minus, h)) in variants.iter().enumerate() {
        let fd_s: Vec<f64> = (0..n).map(|i| (plus.s[i] - minus.s[i]) / (2.0 * h)).collect();
        let an_s: Vec<f64> = (0..n).map(|i| sig.jacobian[(i, col)]).collect();
        let err_s = relative_error(&fd_s, &an_s);
        report.signal = report.signal.max(err_s);
        if col == 0 {
            report.gamma_column = err_s;
        }
        let mu_p = quantized_mean(plus, &cov);
        let mu_m = quantized_mean(minus, &cov);
        let fd_mu: Vec<f64> = (0..n).map(|i| (mu_p[i] - mu_m[i]) / (2.0 * h)).collect();
        let an_mu: Vec<f64> = (0..n).map(|i| mu_jac[(i, col)]).collect();
        report.mean = report.mean.max(relative_error(&fd_mu, &an_mu));
    }
    Ok(report)
}

fn relative_error(fd: &[f64], analytic: &[f64]) -> f64 {
    let floor = JACOBIAN_RELATIVE_FLOOR * analytic.iter().fold(0.0, |m: f64, a| m.max(a.abs()));
    fd.iter()
        .zip(analytic)
        .filter(|(_, a)| a.abs() > floor)
        .map(|(f, a)| (f - a).abs() / a.abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::GPS_CHIP_RATE;
    use approx::assert_relative_eq;

    #[test]
    fn single_sample_bound_is_tight() {
        let cfg = PilotConfig::random(15, 4, GPS_CHIP_RATE, GPS_CHIP_RATE, 1, 2).unwrap();
        let theta = ChannelParams::new(0.8, 0.13 * cfg.chip_period()).unwrap();
        let samples = PilotSamples::new(&cfg, theta.tau).unwrap().truncated(1);
        let sig = SignalEval::from_samples(&samples, theta.gamma);
        let cov = build_covariance(1, 1).unwrap();
        let bound = fisher_1bit_bound(&quantized_moments(&sig, &cov).unwrap()).unwrap();
        let exact = exact_fisher_single(sig.s[0], [sig.jacobian[(0, 0)], sig.jacobian[(0, 1)]]);
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(bound.get(i, j), exact.get(i, j), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn pair_check_rejects_nyquist_grid() {
        let case = PairCase { gamma: 1.0, s: [0.1, 0.2], jacobian: [[1.0, 0.0], [0.0, 1.0]], kappa: 1, lag: 1 };
        assert!(matches!(exact_bound_check_n2(&case), Err(Error::Domain(_))));
    }

    #[test]
    fn ml_rejects_coarse_grid() {
        let cfg = PilotConfig::random(7, 1, GPS_CHIP_RATE, GPS_CHIP_RATE, 1, 2).unwrap();
        let theta = ChannelParams::new(1.0, 0.0).unwrap();
        let step = cfg.chip_period() / 10.0;
        assert!(matches!(ideal_ml_estimate(&cfg, &theta, 10, 1, step), Err(Error::Domain(_))));
    }

    #[test]
    fn moment_check_argument_validation() {
        let cfg = PilotConfig::random(7, 1, GPS_CHIP_RATE, GPS_CHIP_RATE, 2, 2).unwrap();
        let theta = ChannelParams::new(1.0, 0.0).unwrap();
        assert!(mc_moment_check(&cfg, &theta, 0, 10_000, 1).is_err());
        assert!(mc_moment_check(&cfg, &theta, 4, 100, 1).is_err());
        assert!(mc_moment_check(&cfg, &theta, 1000, 10_000, 1).is_err());
    }
}
