//! Periodic band-limited pilot, its samples on the receive grid and the
//! Jacobian of the samples with respect to amplitude and delay.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::special::{sinc, sine_integral};

/// GPS C/A-like chip rate, Hz.
pub const GPS_CHIP_RATE: f64 = 1.023e6;
/// Seed used for the pilot code when none is given.
pub const DEFAULT_CODE_SEED: u64 = 1;
/// Whole pilot periods summed on each side of the evaluation time.
pub const DEFAULT_TAIL_PERIODS: usize = 2;
/// Quadrature points per chip for the power normalization.
pub const NORMALIZATION_POINTS_PER_CHIP: usize = 64;

/// Pilot code, rates and sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotConfig {
    code: Vec<i8>,
    chip_rate: f64,
    bandwidth: f64,
    kappa: u32,
    code_seed: Option<u64>,
    tail_periods: usize,
}

impl PilotConfig {
    /// Pilot with an explicit `+-1` code.
    pub fn new(code: Vec<i8>, chip_rate: f64, bandwidth: f64, kappa: u32, tail_periods: usize) -> Result<Self> {
        if code.is_empty() {
            return Err(Error::domain("pilot code must have at least one chip"));
        }
        if code.iter().any(|&c| c != 1 && c != -1) {
            return Err(Error::domain("pilot code entries must be +1 or -1"));
        }
        if !(chip_rate > 0.0 && chip_rate.is_finite()) {
            return Err(Error::domain("chip rate must be positive"));
        }
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::domain("bandwidth must be positive"));
        }
        if kappa == 0 {
            return Err(Error::domain("oversampling factor must be at least 1"));
        }
        if tail_periods == 0 {
            return Err(Error::domain("tail_periods must be at least 1"));
        }
        let cfg = Self {
            code,
            chip_rate,
            bandwidth,
            kappa,
            code_seed: None,
            tail_periods,
        };
        if cfg.n_samples() == 0 {
            return Err(Error::domain("configuration yields no samples per period"));
        }
        Ok(cfg)
    }

    /// Pilot with a seeded random code of `m` chips.
    pub fn random(m: usize, code_seed: u64, chip_rate: f64, bandwidth: f64, kappa: u32, tail_periods: usize) -> Result<Self> {
        let code = generate_code(code_seed, m)?;
        let mut cfg = Self::new(code, chip_rate, bandwidth, kappa, tail_periods)?;
        cfg.code_seed = Some(code_seed);
        Ok(cfg)
    }

    /// `B = f_c = 1.023 MHz`, Nyquist sampling, default tail.
    pub fn gps_like(m: usize, code_seed: u64) -> Result<Self> {
        Self::random(m, code_seed, GPS_CHIP_RATE, GPS_CHIP_RATE, 1, DEFAULT_TAIL_PERIODS)
    }

    pub fn with_kappa(&self, kappa: u32) -> Result<Self> {
        if kappa == 0 {
            return Err(Error::domain("oversampling factor must be at least 1"));
        }
        Ok(Self { kappa, ..self.clone() })
    }

    pub fn with_tail_periods(&self, tail_periods: usize) -> Result<Self> {
        if tail_periods == 0 {
            return Err(Error::domain("tail_periods must be at least 1"));
        }
        Ok(Self { tail_periods, ..self.clone() })
    }

    /// Same configuration with every chip sign flipped.
    pub fn negated(&self) -> Self {
        Self {
            code: self.code.iter().map(|c| -c).collect(),
            code_seed: None,
            ..self.clone()
        }
    }

    pub fn code(&self) -> &[i8] {
        &self.code
    }
    pub fn chips(&self) -> usize {
        self.code.len()
    }
    pub fn chip_rate(&self) -> f64 {
        self.chip_rate
    }
    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }
    pub fn kappa(&self) -> u32 {
        self.kappa
    }
    pub fn code_seed(&self) -> Option<u64> {
        self.code_seed
    }
    pub fn tail_periods(&self) -> usize {
        self.tail_periods
    }
    pub fn chip_period(&self) -> f64 {
        1.0 / self.chip_rate
    }
    pub fn period(&self) -> f64 {
        self.chips() as f64 * self.chip_period()
    }
    pub fn sample_rate(&self) -> f64 {
        2.0 * self.bandwidth * f64::from(self.kappa)
    }
    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate()
    }

    /// Samples per pilot period, `round(2 kappa M B / f_c)`.
    pub fn n_samples(&self) -> usize {
        (2.0 * f64::from(self.kappa) * self.chips() as f64 * self.bandwidth / self.chip_rate).round() as usize
    }

    #[inline]
    fn chip(&self, k: i64) -> f64 {
        f64::from(self.code[k.rem_euclid(self.code.len() as i64) as usize])
    }
}

/// Channel parameters: amplitude `gamma = sqrt(SNR)` and delay `tau` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub gamma: f64,
    pub tau: f64,
}

impl ChannelParams {
    pub fn new(gamma: f64, tau: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::domain("amplitude gamma must be positive"));
        }
        if !tau.is_finite() {
            return Err(Error::domain("delay tau must be finite"));
        }
        Ok(Self { gamma, tau })
    }

    pub fn from_snr_db(snr_db: f64, tau: f64) -> Result<Self> {
        Self::new(10f64.powf(snr_db / 20.0), tau)
    }

    pub fn snr_db(&self) -> f64 {
        20.0 * self.gamma.log10()
    }
}

/// Seeded `+-1` code of `m` chips.
pub fn generate_code(seed: u64, m: usize) -> Result<Vec<i8>> {
    if m == 0 {
        return Err(Error::domain("code length must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..m).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
}

/// Band-limited rectangular chip pulse of unit energy before filtering.
pub fn pulse(t: f64, cfg: &PilotConfig) -> f64 {
    let tc = cfg.chip_period();
    let w = 2.0 * PI * cfg.bandwidth;
    (sine_integral(w * (t + 0.5 * tc)) - sine_integral(w * (t - 0.5 * tc))) / (PI * tc.sqrt())
}

/// Time derivative of [`pulse`].
pub fn pulse_derivative(t: f64, cfg: &PilotConfig) -> f64 {
    let tc = cfg.chip_period();
    let b2 = 2.0 * cfg.bandwidth;
    b2 * (sinc(b2 * (t + 0.5 * tc)) - sinc(b2 * (t - 0.5 * tc))) / tc.sqrt()
}

/// Window position for `t`: the nearest chip index below `t / T_c + 1/2`
/// and the fractional part used to blend towards the next window.
#[inline]
fn window(t: f64, tc: f64) -> (i64, f64) {
    let f = t / tc + 0.5;
    let k0 = f.floor();
    (k0 as i64, f - k0)
}

/// Smoothstep fade weight and its derivative in `frac`; both ends have zero
/// slope, which keeps the truncated train continuously differentiable.
#[inline]
fn fade_weight(frac: f64) -> (f64, f64) {
    (frac * frac * (3.0 - 2.0 * frac), 6.0 * frac * (1.0 - frac))
}

/// Code value times window weight for chip `j`. The window `[lo, hi]` spans
/// `2 * half_span + 2` chips; the two end chips carry weights `1 - fade` and
/// `fade`, so the truncated sum moves smoothly from one window centre to the
/// next.
#[inline]
fn weighted_chip(cfg: &PilotConfig, j: i64, lo: i64, hi: i64, fade: f64) -> f64 {
    if j < lo || j > hi {
        0.0
    } else if j == lo {
        (1.0 - fade) * cfg.chip(j)
    } else if j == hi {
        fade * cfg.chip(j)
    } else {
        cfg.chip(j)
    }
}

/// Unnormalized pilot value and time derivative at `t`, scaled by
/// `sqrt(T_c)` so that the chips have unit amplitude before band-limiting.
///
/// The periodic pulse train is truncated to `tail_periods` whole periods on
/// each side of the chip nearest `t`, with the outermost chips faded in and
/// out so that the truncated train stays smooth in `t`. Adjacent
/// pulses share their edge sine integrals, so the sum is taken over chip
/// boundaries, weighted by the code transitions.
pub fn pilot_raw(t: f64, cfg: &PilotConfig) -> (f64, f64) {
    let tc = cfg.chip_period();
    let w = 2.0 * PI * cfg.bandwidth;
    let half_span = (cfg.tail_periods * cfg.chips()) as i64;
    let (k0, frac) = window(t, tc);
    let (fade, dfade) = fade_weight(frac);
    let (lo, hi) = (k0 - half_span, k0 + half_span + 1);
    // Si argument at the boundary between chips j-1 and j
    let arg = |j: i64| w * (t - (j as f64 - 0.5) * tc);
    let mut value = 0.0;
    let mut slope = 0.0;
    let mut prev = 0.0;
    for j in lo..=hi + 1 {
        let c = weighted_chip(cfg, j, lo, hi, fade);
        let weight = c - prev;
        prev = c;
        if weight != 0.0 {
            let u = arg(j);
            value += weight * sine_integral(u);
            slope += weight * if u == 0.0 { 1.0 } else { u.sin() / u };
        }
    }
    // the fade weights depend on t as well
    let edge = |j: i64| cfg.chip(j) * (sine_integral(arg(j)) - sine_integral(arg(j + 1)));
    let drift = if dfade == 0.0 { 0.0 } else { dfade * (edge(hi) - edge(lo)) / tc };
    (value / PI, (slope * w + drift) / PI)
}

type NormKey = (Vec<i8>, u64, u64, usize);

fn normalization_cache() -> &'static Mutex<HashMap<NormKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<NormKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Dimensionless scale `alpha` giving `alpha * sqrt(T_c) * sum_k c_k g(t - k T_c)`
/// unit average power over one period. Band-limiting removes a little of the
/// rectangular chips' power, so `alpha` sits slightly above one. Cached per (code, rates, tail); the sampling factor is irrelevant.
pub fn normalize_power(cfg: &PilotConfig) -> Result<f64> {
    let key = (
        cfg.code.clone(),
        cfg.chip_rate.to_bits(),
        cfg.bandwidth.to_bits(),
        cfg.tail_periods,
    );
    if let Some(&alpha) = normalization_cache().lock().expect("cache poisoned").get(&key) {
        return Ok(alpha);
    }
    // computed outside the lock; concurrent first use produces identical values
    let alpha = lattice_power_scale(cfg)?;
    normalization_cache().lock().expect("cache poisoned").insert(key, alpha);
    Ok(alpha)
}

/// Trapezoidal average power of `f` over `[0, period]` with `points`
/// intervals, returned as the amplitude scale that makes it one.
pub fn average_power_scale(period: f64, points: usize, f: impl Fn(f64) -> f64) -> Result<f64> {
    if points == 0 || !(period > 0.0) {
        return Err(Error::domain("quadrature needs a positive period and at least one interval"));
    }
    let dt = period / points as f64;
    let mut acc = 0.5 * (f(0.0).powi(2) + f(period).powi(2));
    for m in 1..points {
        acc += f(m as f64 * dt).powi(2);
    }
    scale_from_power(acc / points as f64)
}

fn scale_from_power(power: f64) -> Result<f64> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::numerical(format!("pilot average power {power} is not positive")));
    }
    Ok(power.sqrt().recip())
}

/// Same quadrature as [`average_power_scale`] applied to [`pilot_raw`], but
/// with the sine integrals tabulated: on a grid of `P` points per chip every
/// boundary argument is an integer multiple of `2 pi B T_c / P`.
fn lattice_power_scale(cfg: &PilotConfig) -> Result<f64> {
    let p = NORMALIZATION_POINTS_PER_CHIP as i64;
    let tc = cfg.chip_period();
    let m_chips = cfg.chips() as i64;
    let half_span = cfg.tail_periods as i64 * m_chips;
    let step = 2.0 * PI * cfg.bandwidth * tc / p as f64;
    let q_max = p * (half_span + 3);
    let table: Vec<f64> = (0..=q_max).map(|q| sine_integral(q as f64 * step)).collect();
    let si = |q: i64| if q >= 0 { table[q as usize] } else { -table[(-q) as usize] };

    let points = m_chips * p;
    // same grid and window choice as average_power_scale over pilot_raw
    let mut acc = 0.0;
    for m in 0..=points {
        let q = m + p / 2;
        let (k0, frac) = (q.div_euclid(p), q.rem_euclid(p) as f64 / p as f64);
        let fade = fade_weight(frac).0;
        let (lo, hi) = (k0 - half_span, k0 + half_span + 1);
        let mut value = 0.0;
        let mut prev = 0.0;
        for j in lo..=hi + 1 {
            let c = weighted_chip(cfg, j, lo, hi, fade);
            let weight = c - prev;
            prev = c;
            if weight != 0.0 {
                value += weight * si(m - p * j + p / 2);
            }
        }
        let x2 = value * value;
        acc += if m == 0 || m == points { 0.5 * x2 } else { x2 };
    }
    scale_from_power(acc / (points as f64 * PI * PI))
}

/// Normalized pilot value `x(t)`.
pub fn pilot_value(t: f64, cfg: &PilotConfig) -> Result<f64> {
    Ok(normalize_power(cfg)? * pilot_raw(t, cfg).0)
}

/// Normalized pilot value and time derivative `(x(t), x'(t))`.
pub fn pilot_value_and_derivative(t: f64, cfg: &PilotConfig) -> Result<(f64, f64)> {
    let alpha = normalize_power(cfg)?;
    let (x, dx) = pilot_raw(t, cfg);
    Ok((alpha * x, alpha * dx))
}

/// Normalized pilot on the receive grid for a given delay: `x_i = x(i T_s - tau)`
/// and `dx_i = d x_i / d tau = -x'(i T_s - tau)`. Independent of the amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSamples {
    pub tau: f64,
    pub x: Vec<f64>,
    pub dx_dtau: Vec<f64>,
}

impl PilotSamples {
    pub fn new(cfg: &PilotConfig, tau: f64) -> Result<Self> {
        let alpha = normalize_power(cfg)?;
        let ts = cfg.sample_period();
        let n = cfg.n_samples();
        let (x, dx_dtau) = (0..n)
            .map(|i| {
                let (v, d) = pilot_raw(i as f64 * ts - tau, cfg);
                (alpha * v, -alpha * d)
            })
            .unzip();
        Ok(Self { tau, x, dx_dtau })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Keep only the first `n` samples.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            tau: self.tau,
            x: self.x[..n.min(self.len())].to_vec(),
            dx_dtau: self.dx_dtau[..n.min(self.len())].to_vec(),
        }
    }
}

/// Sampled signal `s = gamma x(tau)` and its `N x 2` Jacobian
/// `[ds/dgamma, ds/dtau] = [x(tau), gamma dx(tau)/dtau]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalEval {
    pub gamma: f64,
    pub tau: f64,
    pub s: Vec<f64>,
    pub jacobian: Mat<f64>,
}

impl SignalEval {
    pub fn from_samples(samples: &PilotSamples, gamma: f64) -> Self {
        let s = samples.x.iter().map(|x| gamma * x).collect();
        let jacobian = Mat::from_fn(samples.len(), 2, |i, j| {
            if j == 0 {
                samples.x[i]
            } else {
                gamma * samples.dx_dtau[i]
            }
        });
        Self {
            gamma,
            tau: samples.tau,
            s,
            jacobian,
        }
    }

    /// Build directly from signal values and a Jacobian.
    pub fn from_parts(gamma: f64, tau: f64, s: Vec<f64>, jacobian: Mat<f64>) -> Result<Self> {
        if jacobian.nrows() != s.len() || jacobian.ncols() != 2 {
            return Err(Error::domain("jacobian must be N x 2 with N = len(s)"));
        }
        Ok(Self { gamma, tau, s, jacobian })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Sampled pilot with amplitude and delay applied.
pub fn sample_signal(cfg: &PilotConfig, theta: &ChannelParams) -> Result<SignalEval> {
    let samples = PilotSamples::new(cfg, theta.tau)?;
    Ok(SignalEval::from_samples(&samples, theta.gamma))
}
