//! Scalar special functions: normalized sinc, sine integral, Gaussian tail
//! and density, and the standard bivariate normal CDF.
//!
//! Everything here is pure and reentrant. The Gauss-Legendre tables used by
//! the bivariate CDF are built once on first use.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Accuracy knobs for the special functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyPolicy {
    /// Absolute error target for [`sine_integral`].
    pub abs_tol_si: f64,
    /// Absolute error target for [`bivariate_normal_cdf`].
    pub abs_tol_phi2: f64,
    /// Correlations with `|rho|` above this are evaluated with the
    /// degenerate (perfectly correlated) limit formulas.
    pub rho_clamp: f64,
}

impl Default for AccuracyPolicy {
    fn default() -> Self {
        Self {
            abs_tol_si: 1e-12,
            abs_tol_phi2: 1e-7,
            rho_clamp: 1.0 - 1e-12,
        }
    }
}

impl AccuracyPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol_si > 0.0 && self.abs_tol_phi2 > 0.0) {
            return Err(Error::domain("accuracy tolerances must be strictly positive"));
        }
        if !(self.rho_clamp > 0.0 && self.rho_clamp < 1.0) {
            return Err(Error::domain("rho_clamp must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
///
/// Nonzero integers map to exactly zero so that a covariance sampled at the
/// Nyquist rate is exactly the identity.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x.fract() == 0.0 {
        0.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Below this magnitude the Maclaurin series is used for `Si`.
const SI_SERIES_LIMIT: f64 = 4.0;

/// Sine integral `Si(x) = int_0^x sin(u)/u du`.
///
/// Maclaurin series for `|x| <= 4`; above that `Si` is recovered from the
/// auxiliary functions `f`, `g` (`Si = pi/2 - f cos x - g sin x`), which are
/// the real and imaginary parts of `e^{ix} E1(ix)` evaluated by a continued
/// fraction. Both branches are accurate to a few ulp of `pi/2`.
pub fn sine_integral(x: f64) -> f64 {
    let t = x.abs();
    let si = if t <= SI_SERIES_LIMIT {
        si_series(t)
    } else {
        FRAC_PI_2 + e1_imaginary_axis(t).im
    };
    si.copysign(x)
}

fn si_series(t: f64) -> f64 {
    // sum_k (-1)^k t^(2k+1) / ((2k+1) (2k+1)!)
    if t == 0.0 {
        return 0.0;
    }
    let t2 = t * t;
    let mut term = t; // t^(2k+1) / (2k+1)!
    let mut sum = t;
    let mut k = 0u32;
    loop {
        k += 1;
        let n = f64::from(2 * k + 1);
        term *= -t2 / ((n - 1.0) * n);
        let contrib = term / n;
        sum += contrib;
        if contrib.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `e^{-it} * h(t)` where `h` is the Lentz continued fraction for
/// `e^{it} E1(it)`; the result equals `E1(it) = -Ci(t) + i (Si(t) - pi/2)`.
fn e1_imaginary_axis(t: f64) -> Complex64 {
    const TINY: f64 = 1e-300;
    let mut b = Complex64::new(1.0, t);
    let mut c = Complex64::new(1.0 / TINY, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 2..500 {
        let a = -f64::from((i - 1) * (i - 1));
        b += 2.0;
        d = (d * a + b).inv();
        c = b + c.inv() * a;
        let del = c * d;
        h *= del;
        if (del.re - 1.0).abs() + del.im.abs() < 1e-16 {
            break;
        }
    }
    Complex64::new(t.cos(), -t.sin()) * h
}

/// Derivative of the sine integral, `sin(x)/x`.
pub fn sine_integral_derivative(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Gaussian tail probability `Q(x) = P(U > x)` for standard normal `U`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Standard normal CDF `Phi(x) = 1 - Q(x)`, computed without cancellation.
pub fn normal_cdf(x: f64) -> f64 {
    q_function(-x)
}

/// Standard normal density; equals `-dQ/dx`.
pub fn std_normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `P(U <= h, V <= k)` for standard bivariate normal `(U, V)` with
/// correlation `rho`, using the default [`AccuracyPolicy`].
pub fn bivariate_normal_cdf(h: f64, k: f64, rho: f64) -> Result<f64> {
    bivariate_normal_cdf_with(h, k, rho, &AccuracyPolicy::default())
}

/// [`bivariate_normal_cdf`] with an explicit policy. Infinite limits are
/// allowed and handled by marginalization.
pub fn bivariate_normal_cdf_with(h: f64, k: f64, rho: f64, policy: &AccuracyPolicy) -> Result<f64> {
    policy.validate()?;
    if rho.is_nan() || rho.abs() > 1.0 {
        return Err(Error::domain(format!("correlation {rho} outside [-1, 1]")));
    }
    if h.is_nan() || k.is_nan() {
        return Err(Error::domain("bivariate CDF limits must not be NaN"));
    }
    if h == f64::NEG_INFINITY || k == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    if h == f64::INFINITY {
        return Ok(normal_cdf(k));
    }
    if k == f64::INFINITY {
        return Ok(normal_cdf(h));
    }
    if rho.abs() > policy.rho_clamp {
        return Ok(degenerate_cdf(h, k, rho.signum()));
    }
    Ok(bvn_lower(h, k, rho))
}

/// Limit of the CDF for perfectly (anti-)correlated components.
fn degenerate_cdf(h: f64, k: f64, sign: f64) -> f64 {
    if sign > 0.0 {
        normal_cdf(h.min(k))
    } else {
        (normal_cdf(h) - normal_cdf(-k)).max(0.0)
    }
}

/// Lower-orthant bivariate CDF for finite limits and `|rho| <= 1`, with no
/// argument checking. Hot path of the quantized covariance.
#[inline]
pub(crate) fn bvn_lower(h: f64, k: f64, rho: f64) -> f64 {
    bvn_upper(-h, -k, rho).clamp(0.0, 1.0)
}

struct HalfRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Positive halves of the 6-, 12- and 20-point Gauss-Legendre rules.
fn gauss_legendre_halves() -> &'static [HalfRule; 3] {
    static RULES: OnceLock<[HalfRule; 3]> = OnceLock::new();
    RULES.get_or_init(|| [half_rule(6), half_rule(12), half_rule(20)])
}

fn half_rule(n: usize) -> HalfRule {
    let mut nodes = Vec::with_capacity(n / 2);
    let mut weights = Vec::with_capacity(n / 2);
    let nf = n as f64;
    for i in 1..=n / 2 {
        let mut x = (PI * (i as f64 - 0.25) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    HalfRule { nodes, weights }
}

/// Upper-orthant probability `P(U > h, V > k)`: the Drezner-Wesolowsky
/// integral over the correlation parameter in Genz's formulation, with the
/// rule order picked by `|rho|` band and a series correction for `|rho|`
/// near one.
fn bvn_upper(h: f64, k: f64, rho: f64) -> f64 {
    let rules = gauss_legendre_halves();
    let rule = if rho.abs() < 0.3 {
        &rules[0]
    } else if rho.abs() < 0.75 {
        &rules[1]
    } else {
        &rules[2]
    };
    let two_pi = 2.0 * PI;
    let mut hk = h * k;
    let mut bvn = 0.0;

    if rho.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = rho.asin();
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            for sgn in [-1.0, 1.0] {
                let sn = (0.5 * asr * (1.0 + sgn * x)).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (2.0 * two_pi) + normal_cdf(-h) * normal_cdf(-k);
    }

    let mut k = k;
    if rho < 0.0 {
        k = -k;
        hk = -hk;
    }
    if rho.abs() < 1.0 {
        let a_s = (1.0 - rho) * (1.0 + rho);
        let mut a = a_s.sqrt();
        let bs = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-0.5 * (bs / a_s + hk)).exp()
            * (1.0 - c * (bs - a_s) * (1.0 - d * bs / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        if hk > -160.0 {
            let b = bs.sqrt();
            bvn -= (-0.5 * hk).exp()
                * two_pi.sqrt()
                * normal_cdf(-b / a)
                * b
                * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
        }
        a *= 0.5;
        for (&x, &w) in rule.nodes.iter().zip(&rule.weights) {
            for sgn in [-1.0, 1.0] {
                let xs = (a * (1.0 + sgn * x)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -0.5 * (bs / xs + hk);
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * xs / (2.0 * (1.0 + rs).powi(2))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / two_pi;
    }
    if rho > 0.0 {
        bvn + normal_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            out += if h < 0.0 {
                normal_cdf(k) - normal_cdf(h)
            } else {
                normal_cdf(-h) - normal_cdf(-k)
            };
        }
        out
    }
}
