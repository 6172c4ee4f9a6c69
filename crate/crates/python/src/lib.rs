//! Python bindings: pilot configuration, channel parameters, the Fisher
//! bound pair, sweeps and the validation checks.

use std::collections::BTreeMap;
use std::path::PathBuf;

use onebit_core::scenario::{self, AdcModel, SweepSpec};
use onebit_core::signal::{self, GPS_CHIP_RATE};
use onebit_core::{fisher, noise, special, validation, Error};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Domain(m) => PyValueError::new_err(m),
        Error::Numerical(m) => PyArithmeticError::new_err(m),
        Error::Io(m) => PyOSError::new_err(m),
    }
}

type Matrix2 = [[f64; 2]; 2];

/// Periodic +-1 pilot, its bandwidth, oversampling and tail truncation.
#[pyclass(name = "PilotConfig", module = "onebit", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPilotConfig {
    inner: signal::PilotConfig,
}

#[pymethods]
impl PyPilotConfig {
    #[new]
    #[pyo3(signature = (m, code_seed=1, chip_rate=GPS_CHIP_RATE, bandwidth=None, kappa=1, tail_periods=2))]
    fn new(m: usize, code_seed: u64, chip_rate: f64, bandwidth: Option<f64>, kappa: u32, tail_periods: usize) -> PyResult<Self> {
        let bw = bandwidth.unwrap_or(chip_rate);
        let inner = signal::PilotConfig::random(m, code_seed, chip_rate, bw, kappa, tail_periods).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Pilot with an explicit +-1 code.
    #[staticmethod]
    #[pyo3(signature = (code, chip_rate=GPS_CHIP_RATE, bandwidth=None, kappa=1, tail_periods=2))]
    fn from_code(code: Vec<i8>, chip_rate: f64, bandwidth: Option<f64>, kappa: u32, tail_periods: usize) -> PyResult<Self> {
        let bw = bandwidth.unwrap_or(chip_rate);
        let inner = signal::PilotConfig::new(code, chip_rate, bw, kappa, tail_periods).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn with_kappa(&self, kappa: u32) -> PyResult<Self> {
        Ok(Self { inner: self.inner.with_kappa(kappa).map_err(to_py)? })
    }

    #[getter]
    fn code(&self) -> Vec<i8> {
        self.inner.code().to_vec()
    }
    #[getter]
    fn chips(&self) -> usize {
        self.inner.chips()
    }
    #[getter]
    fn kappa(&self) -> u32 {
        self.inner.kappa()
    }
    #[getter]
    fn chip_rate(&self) -> f64 {
        self.inner.chip_rate()
    }
    #[getter]
    fn bandwidth(&self) -> f64 {
        self.inner.bandwidth()
    }
    #[getter]
    fn chip_period(&self) -> f64 {
        self.inner.chip_period()
    }
    #[getter]
    fn sample_period(&self) -> f64 {
        self.inner.sample_period()
    }
    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    /// Power-normalized pilot value at time `t` (seconds).
    fn value(&self, t: f64) -> PyResult<f64> {
        signal::pilot_value(t, &self.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "PilotConfig(M={}, kappa={}, chip_rate={}, bandwidth={})",
            self.inner.chips(),
            self.inner.kappa(),
            self.inner.chip_rate(),
            self.inner.bandwidth()
        )
    }
}

/// Amplitude `gamma` (linear, sqrt of SNR) and delay `tau` in seconds.
#[pyclass(name = "ChannelParams", module = "onebit", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyChannelParams {
    inner: signal::ChannelParams,
}

#[pymethods]
impl PyChannelParams {
    #[new]
    fn new(gamma: f64, tau: f64) -> PyResult<Self> {
        Ok(Self { inner: signal::ChannelParams::new(gamma, tau).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_snr_db(snr_db: f64, tau: f64) -> PyResult<Self> {
        Ok(Self { inner: signal::ChannelParams::from_snr_db(snr_db, tau).map_err(to_py)? })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }
    #[getter]
    fn tau(&self) -> f64 {
        self.inner.tau
    }
    #[getter]
    fn snr_db(&self) -> f64 {
        self.inner.snr_db()
    }

    fn __repr__(&self) -> String {
        format!("ChannelParams(gamma={}, tau={})", self.inner.gamma, self.inner.tau)
    }
}

/// Quantization loss at one (SNR, kappa) point; `error` is set when the
/// point could not be computed.
#[pyclass(name = "LossPoint", module = "onebit", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyLossPoint {
    snr_db: f64,
    kappa: u32,
    chi_gamma_db: f64,
    chi_tau_db: f64,
    error: Option<String>,
}

impl From<&fisher::LossPoint> for PyLossPoint {
    fn from(p: &fisher::LossPoint) -> Self {
        Self {
            snr_db: p.snr_db,
            kappa: p.kappa,
            chi_gamma_db: p.chi_gamma_db,
            chi_tau_db: p.chi_tau_db,
            error: p.error.clone(),
        }
    }
}

impl From<&PyLossPoint> for fisher::LossPoint {
    fn from(p: &PyLossPoint) -> Self {
        fisher::LossPoint {
            snr_db: p.snr_db,
            kappa: p.kappa,
            chi_gamma_db: p.chi_gamma_db,
            chi_tau_db: p.chi_tau_db,
            error: p.error.clone(),
        }
    }
}

#[pymethods]
impl PyLossPoint {
    fn __repr__(&self) -> String {
        match &self.error {
            None => format!(
                "LossPoint(snr_db={}, kappa={}, chi_gamma_db={:.4}, chi_tau_db={:.4})",
                self.snr_db, self.kappa, self.chi_gamma_db, self.chi_tau_db
            ),
            Some(e) => format!("LossPoint(snr_db={}, kappa={}, error={e:?})", self.snr_db, self.kappa),
        }
    }
}

/// Ideal and pessimistic 1-bit Fisher matrices over `[gamma, tau]`.
#[pyclass(name = "BoundPair", module = "onebit", frozen, get_all)]
struct PyBoundPair {
    ideal: Matrix2,
    bound: Matrix2,
    chi_gamma_db: f64,
    chi_tau_db: f64,
}

#[pymethods]
impl PyBoundPair {
    fn __repr__(&self) -> String {
        format!("BoundPair(chi_gamma_db={:.4}, chi_tau_db={:.4})", self.chi_gamma_db, self.chi_tau_db)
    }
}

#[pyfunction]
fn sine_integral(x: f64) -> f64 {
    special::sine_integral(x)
}

#[pyfunction]
fn q_function(x: f64) -> f64 {
    special::q_function(x)
}

#[pyfunction]
fn sinc(x: f64) -> f64 {
    special::sinc(x)
}

#[pyfunction]
fn bivariate_normal_cdf(h: f64, k: f64, rho: f64) -> PyResult<f64> {
    special::bivariate_normal_cdf(h, k, rho).map_err(to_py)
}

/// Samples `s` and Jacobian rows `[ds/dgamma, ds/dtau]` on the receive grid.
#[pyfunction]
fn sample_signal(cfg: &PyPilotConfig, theta: &PyChannelParams) -> PyResult<(Vec<f64>, Vec<[f64; 2]>)> {
    let sig = signal::sample_signal(&cfg.inner, &theta.inner).map_err(to_py)?;
    let jac = (0..sig.len()).map(|i| [sig.jacobian[(i, 0)], sig.jacobian[(i, 1)]]).collect();
    Ok((sig.s, jac))
}

/// First `n` lags of the normalized noise autocorrelation at oversampling `kappa`.
#[pyfunction]
fn noise_lags(n: usize, kappa: u32) -> PyResult<Vec<f64>> {
    Ok(noise::build_covariance(n, kappa).map_err(to_py)?.lags().to_vec())
}

#[pyfunction]
fn bound_pair(py: Python<'_>, cfg: &PyPilotConfig, theta: &PyChannelParams) -> PyResult<PyBoundPair> {
    let (cfg, theta) = (cfg.inner.clone(), theta.inner);
    let p = py
        .detach(move || {
            let sig = signal::sample_signal(&cfg, &theta)?;
            let cov = noise::build_covariance(sig.len(), cfg.kappa())?;
            fisher::bound_pair(&sig, &cov)
        })
        .map_err(to_py)?;
    Ok(PyBoundPair {
        ideal: p.ideal.entries,
        bound: p.bound.entries,
        chi_gamma_db: p.chi_gamma_db,
        chi_tau_db: p.chi_tau_db,
    })
}

#[pyfunction]
fn compute_point(py: Python<'_>, pilot: &PyPilotConfig, kappa: u32, snr_db: f64, tau: f64) -> PyLossPoint {
    let pilot = pilot.inner.clone();
    let p = py.detach(move || scenario::compute_point(&pilot, kappa, snr_db, tau));
    (&p).into()
}

/// Runs the (SNR, kappa) grid; writes one table per SNR when `output_dir` is given.
#[pyfunction]
#[pyo3(signature = (snr_db_list, kappa_list, pilot, tau=0.0, output_dir=None))]
fn run_sweep(
    py: Python<'_>,
    snr_db_list: Vec<f64>,
    kappa_list: Vec<u32>,
    pilot: &PyPilotConfig,
    tau: f64,
    output_dir: Option<PathBuf>,
) -> PyResult<Vec<PyLossPoint>> {
    let write = output_dir.is_some();
    let spec = SweepSpec::new(snr_db_list, kappa_list, pilot.inner.clone(), tau, output_dir.unwrap_or_default())
        .map_err(to_py)?;
    let points = py
        .detach(move || {
            let points = scenario::run_sweep(&spec)?;
            if write {
                scenario::emit_sweep(&spec, &points)?;
            }
            Ok(points)
        })
        .map_err(to_py)?;
    Ok(points.iter().map(Into::into).collect())
}

/// Worst `|chi_tau|` over the kappa = 3 points.
#[pyfunction]
fn equal_complexity_loss(points: Vec<PyRef<'_, PyLossPoint>>) -> PyResult<f64> {
    let pts: Vec<fisher::LossPoint> = points.iter().map(|p| (&**p).into()).collect();
    scenario::equal_complexity_loss_from_points(&pts).map_err(to_py)
}

#[pyfunction]
fn adc_power(beta: f64, bits: u32, fs: f64) -> PyResult<f64> {
    scenario::adc_power(&AdcModel::new(beta, bits, fs).map_err(to_py)?).map_err(to_py)
}

/// Monte Carlo check of the sign-sample moments; returns the report fields as a dict.
#[pyfunction]
fn mc_moment_check(
    py: Python<'_>,
    cfg: &PyPilotConfig,
    theta: &PyChannelParams,
    n_sub: usize,
    draws: usize,
    seed: u64,
) -> PyResult<BTreeMap<&'static str, f64>> {
    let (cfg, theta) = (cfg.inner.clone(), theta.inner);
    let r = py
        .detach(move || validation::mc_moment_check(&cfg, &theta, n_sub, draws, seed))
        .map_err(to_py)?;
    Ok(BTreeMap::from([
        ("draws", r.draws as f64),
        ("max_abs_z_mean_err", r.max_abs_z_mean_err),
        ("max_abs_z_cov_err", r.max_abs_z_cov_err),
        ("mean_std_error", r.mean_std_error),
        ("cov_std_error", r.cov_std_error),
        ("max_mean_score", r.max_mean_score),
        ("max_cov_score", r.max_cov_score),
    ]))
}

/// Exact two-sample information against the bound for samples `start` and
/// `start + lag`: `(exact, bound, min_gap_eigenvalue, holds)`.
#[pyfunction]
fn exact_bound_check_n2(
    cfg: &PyPilotConfig,
    theta: &PyChannelParams,
    start: usize,
    lag: usize,
) -> PyResult<(Matrix2, Matrix2, f64, bool)> {
    let case = validation::PairCase::from_pilot(&cfg.inner, &theta.inner, start, lag).map_err(to_py)?;
    let r = validation::exact_bound_check_n2(&case).map_err(to_py)?;
    Ok((r.exact.entries, r.bound.entries, r.min_gap_eigenvalue, r.holds))
}

/// Largest relative Jacobian error against central differences.
#[pyfunction]
fn jacobian_checks(cfg: &PyPilotConfig, theta: &PyChannelParams) -> PyResult<f64> {
    Ok(validation::jacobian_checks(&cfg.inner, &theta.inner).map_err(to_py)?.max())
}

#[pymodule]
fn onebit(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GPS_CHIP_RATE", GPS_CHIP_RATE)?;
    m.add_class::<PyPilotConfig>()?;
    m.add_class::<PyChannelParams>()?;
    m.add_class::<PyLossPoint>()?;
    m.add_class::<PyBoundPair>()?;
    m.add_function(wrap_pyfunction!(sine_integral, m)?)?;
    m.add_function(wrap_pyfunction!(q_function, m)?)?;
    m.add_function(wrap_pyfunction!(sinc, m)?)?;
    m.add_function(wrap_pyfunction!(bivariate_normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(sample_signal, m)?)?;
    m.add_function(wrap_pyfunction!(noise_lags, m)?)?;
    m.add_function(wrap_pyfunction!(bound_pair, m)?)?;
    m.add_function(wrap_pyfunction!(compute_point, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(equal_complexity_loss, m)?)?;
    m.add_function(wrap_pyfunction!(adc_power, m)?)?;
    m.add_function(wrap_pyfunction!(mc_moment_check, m)?)?;
    m.add_function(wrap_pyfunction!(exact_bound_check_n2, m)?)?;
    m.add_function(wrap_pyfunction!(jacobian_checks, m)?)?;
    Ok(())
}
