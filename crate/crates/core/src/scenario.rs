//! SNR x oversampling sweeps, loss tables and the ADC complexity model.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::fisher::{fisher_1bit_bound, fisher_ideal, loss_ratios, quantized_moments, BoundPair, FisherMatrix, LossPoint};
use crate::noise::build_covariance;
use crate::signal::{ChannelParams, PilotConfig, PilotSamples, SignalEval};

/// Version string written into every table header.
pub const ARTIFACT_VERSION: &str = concat!("onebit ", env!("CARGO_PKG_VERSION"));

/// Default SNR grid of the amplitude-loss tables.
pub const GAMMA_SWEEP_SNR_DB: [f64; 3] = [-24.0, -3.0, 0.0];
/// Default SNR grid of the delay-loss tables.
pub const TAU_SWEEP_SNR_DB: [f64; 3] = [-24.0, -6.0, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TableFormat {
    #[default]
    Tsv,
}

/// A grid of (SNR, oversampling) points over one pilot.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub snr_db_list: Vec<f64>,
    pub kappa_list: Vec<u32>,
    /// The pilot; its own oversampling factor is replaced per grid point.
    pub pilot: PilotConfig,
    pub tau: f64,
    pub output_dir: PathBuf,
    pub format: TableFormat,
}

impl SweepSpec {
    pub fn new(
        snr_db_list: Vec<f64>,
        kappa_list: Vec<u32>,
        pilot: PilotConfig,
        tau: f64,
        output_dir: impl Into<PathBuf>,
    ) -> Result<Self> {
        let spec = Self {
            snr_db_list,
            kappa_list,
            pilot,
            tau,
            output_dir: output_dir.into(),
            format: TableFormat::Tsv,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db_list.is_empty() {
            return Err(Error::domain("SNR list is empty"));
        }
        if self.kappa_list.is_empty() {
            return Err(Error::domain("oversampling list is empty"));
        }
        if self.kappa_list.contains(&0) {
            return Err(Error::domain("oversampling factors must be at least 1"));
        }
        if let Some(bad) = self.snr_db_list.iter().find(|s| !s.is_finite()) {
            return Err(Error::domain(format!("SNR {bad} dB is not finite")));
        }
        if !self.tau.is_finite() {
            return Err(Error::domain("delay must be finite"));
        }
        Ok(())
    }

    /// Distinct oversampling factors in ascending order.
    pub fn kappas(&self) -> Vec<u32> {
        let mut k = self.kappa_list.clone();
        k.sort_unstable();
        k.dedup();
        k
    }

    /// Header lines describing the scenario, without the leading `#`.
    pub fn describe(&self) -> Vec<String> {
        let p = &self.pilot;
        let seed = p.code_seed().map_or_else(|| "explicit".to_string(), |s| s.to_string());
        vec![
            format!(
                "M={} chip_rate_hz={} bandwidth_hz={} tail_periods={}",
                p.chips(),
                p.chip_rate(),
                p.bandwidth(),
                p.tail_periods()
            ),
            format!("code_seed={seed} tau_s={}", self.tau),
        ]
    }
}

/// Ideal and bound information at one grid point, computed from scratch.
pub fn compute_pair(pilot: &PilotConfig, kappa: u32, snr_db: f64, tau: f64) -> Result<BoundPair> {
    let cfg = pilot.with_kappa(kappa)?;
    let theta = ChannelParams::from_snr_db(snr_db, tau)?;
    let samples = PilotSamples::new(&cfg, tau)?;
    let sig = SignalEval::from_samples(&samples, theta.gamma);
    let cov = build_covariance(cfg.n_samples(), kappa)?;
    crate::fisher::bound_pair(&sig, &cov)
}

/// [`compute_pair`] reduced to a loss point; failures are recorded, not returned.
pub fn compute_point(pilot: &PilotConfig, kappa: u32, snr_db: f64, tau: f64) -> LossPoint {
    match compute_pair(pilot, kappa, snr_db, tau) {
        Ok(p) => LossPoint::ok(snr_db, kappa, p.chi_gamma_db, p.chi_tau_db),
        Err(e) => LossPoint::failed(snr_db, kappa, &e),
    }
}

/// Evaluates every (SNR, kappa) point of the grid.
///
/// The result is ordered by SNR in list order, then by ascending kappa.
/// Failing points carry their error and the sweep continues; only an
/// invalid spec is an error.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<LossPoint>> {
    spec.validate()?;
    let kappas = spec.kappas();
    let mut by_kappa: Vec<Vec<LossPoint>> = Vec::with_capacity(kappas.len());
    for &kappa in &kappas {
        log::info!("kappa={kappa}: {} SNR points", spec.snr_db_list.len());
        by_kappa.push(sweep_kappa(spec, kappa));
    }
    let mut out = Vec::with_capacity(kappas.len() * spec.snr_db_list.len());
    for s in 0..spec.snr_db_list.len() {
        for col in &by_kappa {
            out.push(col[s].clone());
        }
    }
    Ok(out)
}

// One oversampling factor, every SNR. The noise covariance is factored once
// for all ideal informations and released before the sign covariances are
// built, so at most one large factor is alive at a time.
fn sweep_kappa(spec: &SweepSpec, kappa: u32) -> Vec<LossPoint> {
    let fail_all = |e: &Error| spec.snr_db_list.iter().map(|&s| LossPoint::failed(s, kappa, e)).collect();
    let setup = || -> Result<_> {
        let cfg = spec.pilot.with_kappa(kappa)?;
        let samples = PilotSamples::new(&cfg, spec.tau)?;
        let cov = build_covariance(cfg.n_samples(), kappa)?;
        Ok((samples, cov))
    };
    let (samples, cov) = match setup() {
        Ok(v) => v,
        Err(e) => return fail_all(&e),
    };

    let signals: Vec<Result<SignalEval>> = spec
        .snr_db_list
        .iter()
        .map(|&snr| ChannelParams::from_snr_db(snr, spec.tau).map(|th| SignalEval::from_samples(&samples, th.gamma)))
        .collect();
    let ideal: Vec<Result<FisherMatrix>> = signals
        .iter()
        .map(|sig| sig.as_ref().map_err(Clone::clone).and_then(|sig| fisher_ideal(sig, &cov)))
        .collect();
    let unfactored = cov.clone();
    drop(cov);
    let cov = unfactored;

    spec.snr_db_list
        .iter()
        .zip(signals.iter().zip(&ideal))
        .map(|(&snr, (sig, f_y))| {
            let point = || -> Result<(f64, f64)> {
                let sig = sig.as_ref().map_err(Clone::clone)?;
                let f_y = f_y.as_ref().map_err(Clone::clone)?;
                let f_z = fisher_1bit_bound(&quantized_moments(sig, &cov)?)?;
                loss_ratios(f_y, &f_z)
            };
            match point() {
                Ok((g, t)) => {
                    log::info!("snr={snr} dB kappa={kappa}: chi_gamma={g:.3} dB chi_tau={t:.3} dB");
                    LossPoint::ok(snr, kappa, g, t)
                }
                Err(e) => {
                    log::warn!("snr={snr} dB kappa={kappa} failed: {e}");
                    LossPoint::failed(snr, kappa, &e)
                }
            }
        })
        .collect()
}

/// File-name tag of an SNR: `m24dB` for -24 dB, `0dB` for 0 dB.
pub fn snr_tag(snr_db: f64) -> String {
    let mag = snr_db.abs();
    if snr_db < 0.0 {
        format!("m{mag}dB")
    } else {
        format!("{mag}dB")
    }
}

pub fn table_file_name(snr_db: f64) -> String {
    format!("QLoss_SamplingRate_{}.txt", snr_tag(snr_db))
}

/// Writes the loss table of one SNR: rows `kappa chi_gamma chi_tau` in
/// ascending kappa, failed points as `nan`.
pub fn emit_table(points: &[LossPoint], snr_db: f64, output_dir: &Path) -> Result<PathBuf> {
    emit_table_with_header(points, snr_db, output_dir, &[])
}

/// [`emit_table`] with extra `#` header lines.
pub fn emit_table_with_header(points: &[LossPoint], snr_db: f64, output_dir: &Path, header: &[String]) -> Result<PathBuf> {
    if let Some(p) = points.iter().find(|p| p.snr_db != snr_db) {
        return Err(Error::domain(format!("point at {} dB in the table for {snr_db} dB", p.snr_db)));
    }
    let mut rows: Vec<&LossPoint> = points.iter().collect();
    rows.sort_by_key(|p| p.kappa);

    let mut text = String::new();
    writeln!(text, "# {ARTIFACT_VERSION}").unwrap();
    writeln!(text, "# quantization loss versus oversampling").unwrap();
    writeln!(text, "# snr_db={snr_db}").unwrap();
    for line in header {
        writeln!(text, "# {line}").unwrap();
    }
    writeln!(text, "# columns: kappa chi_gamma_db chi_tau_db").unwrap();
    for p in rows {
        if let Some(err) = &p.error {
            writeln!(text, "# kappa={} failed: {}", p.kappa, err.replace('\n', " ")).unwrap();
        }
        writeln!(text, "{} {:.2} {:.2}", p.kappa, p.chi_gamma_db, p.chi_tau_db).unwrap();
    }

    fs::create_dir_all(output_dir).map_err(|e| Error::Io(format!("{}: {e}", output_dir.display())))?;
    let path = output_dir.join(table_file_name(snr_db));
    fs::write(&path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Reads a table written by [`emit_table`].
pub fn parse_table(path: &Path) -> Result<Vec<LossPoint>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut snr_db = None;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(meta) = line.strip_prefix('#') {
            if let Some(v) = meta.trim().strip_prefix("snr_db=") {
                snr_db = Some(parse_num::<f64>(v, lineno)?);
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 3 {
            return Err(Error::domain(format!("line {}: expected 3 columns, found {}", lineno + 1, cols.len())));
        }
        let snr = snr_db.ok_or_else(|| Error::domain("table has no snr_db header"))?;
        let kappa = parse_num::<u32>(cols[0], lineno)?;
        let g = parse_num::<f64>(cols[1], lineno)?;
        let t = parse_num::<f64>(cols[2], lineno)?;
        points.push(if g.is_nan() || t.is_nan() {
            LossPoint { snr_db: snr, kappa, chi_gamma_db: g, chi_tau_db: t, error: Some("failed".into()) }
        } else {
            LossPoint::ok(snr, kappa, g, t)
        });
    }
    Ok(points)
}

fn parse_num<T: std::str::FromStr>(s: &str, lineno: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::domain(format!("line {}: cannot parse '{s}'", lineno + 1)))
}

/// Writes one table per SNR of a finished sweep and returns the paths.
pub fn emit_sweep(spec: &SweepSpec, points: &[LossPoint]) -> Result<Vec<PathBuf>> {
    let header = spec.describe();
    let mut paths = Vec::new();
    let mut seen: Vec<f64> = Vec::new();
    for &snr in &spec.snr_db_list {
        if seen.contains(&snr) {
            continue;
        }
        seen.push(snr);
        let rows: Vec<LossPoint> = points.iter().filter(|p| p.snr_db == snr).cloned().collect();
        paths.push(emit_table_with_header(&rows, snr, &spec.output_dir, &header)?);
    }
    Ok(paths)
}

/// ADC power model `P = beta (2^b - 1) f_s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcModel {
    /// Joules per conversion step and hertz.
    pub beta: f64,
    pub bits: u32,
    /// Sampling rate in Hz.
    pub fs: f64,
}

impl AdcModel {
    pub fn new(beta: f64, bits: u32, fs: f64) -> Result<Self> {
        let m = Self { beta, bits, fs };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bits < 1 {
            return Err(Error::domain("an ADC needs at least one bit"));
        }
        if self.bits > 63 {
            return Err(Error::domain("bit count too large"));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::domain("sampling rate must be positive"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::domain("beta must be nonnegative"));
        }
        Ok(())
    }
}

pub fn adc_power(model: &AdcModel) -> Result<f64> {
    model.validate()?;
    Ok(model.beta * ((1u64 << model.bits) - 1) as f64 * model.fs)
}

/// Oversampling factor at which a 1-bit converter matches the power of a
/// `bits`-bit converter at the Nyquist rate.
pub fn equal_power_kappa(bits: u32) -> Result<u32> {
    let m = AdcModel::new(1.0, bits, 1.0)?;
    Ok(adc_power(&m)? as u32)
}

/// Worst delay loss over the SNR grid at `kappa = 3`, the oversampling at
/// which a 1-bit converter costs as much as a 2-bit converter.
pub fn equal_complexity_loss(spec: &SweepSpec) -> Result<f64> {
    if spec.snr_db_list.is_empty() {
        return Err(Error::domain("SNR list is empty"));
    }
    if !spec.kappa_list.contains(&3) {
        return Err(Error::domain("the sweep does not include kappa = 3"));
    }
    let mut only3 = spec.clone();
    only3.kappa_list = vec![3];
    equal_complexity_loss_from_points(&run_sweep(&only3)?)
}

/// [`equal_complexity_loss`] over the `kappa = 3` rows of a finished sweep.
pub fn equal_complexity_loss_from_points(points: &[LossPoint]) -> Result<f64> {
    let mut worst: Option<f64> = None;
    for p in points.iter().filter(|p| p.kappa == 3) {
        if let Some(e) = &p.error {
            return Err(Error::numerical(format!("kappa=3 at {} dB failed: {e}", p.snr_db)));
        }
        let v = p.chi_tau_db.abs();
        worst = Some(worst.map_or(v, |w: f64| w.max(v)));
    }
    worst.ok_or_else(|| Error::domain("no kappa = 3 points"))
}

/// Parses `key = value` lines; `#` starts a comment. Keys use the long flag
/// names with dashes or underscores.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::domain(format!("config line {}: expected key=value", lineno + 1)))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(Error::domain(format!("config line {}: empty key", lineno + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}
