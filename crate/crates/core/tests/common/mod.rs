//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use quadrature::double_exponential::integrate;

const QUAD_TOL: f64 = 1e-15;

/// `int_0^x sin(u)/u du` by tanh-sinh quadrature on half-periods.
pub fn si_oracle(x: f64) -> f64 {
    let t = x.abs();
    let f = |u: f64| if u == 0.0 { 1.0 } else { u.sin() / u };
    let mut sum = 0.0;
    let mut a = 0.0;
    while a < t {
        let b = (a + PI).min(t);
        sum += integrate(f, a, b, QUAD_TOL).integral;
        a = b;
    }
    sum.copysign(x)
}

fn density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF by quadrature of the density.
pub fn phi_oracle(z: f64) -> f64 {
    if z <= 0.0 {
        tail_oracle(-z)
    } else {
        1.0 - tail_oracle(z)
    }
}

// upper tail, z >= 0
fn tail_oracle(z: f64) -> f64 {
    let upper = z.max(0.0) + 40.0;
    let mut sum = 0.0;
    let mut a = z;
    while a < upper {
        let b = (a + 2.0).min(upper);
        sum += integrate(density, a, b, QUAD_TOL).integral;
        a = b;
    }
    sum
}

/// `P(U <= h, V <= k)` for a standard bivariate normal with correlation
/// `rho`, as the double integral of the density: the outer integral over
/// `u` is done by quadrature, the inner one by [`phi_oracle`] (itself a
/// quadrature) after conditioning on `u`.
pub fn bvn_oracle(h: f64, k: f64, rho: f64) -> f64 {
    assert!(rho.abs() < 1.0);
    let lower = -40.0;
    if h <= lower {
        return 0.0;
    }
    let sd = (1.0 - rho * rho).sqrt();
    let f = |u: f64| density(u) * phi_oracle((k - rho * u) / sd);
    // breakpoints where the conditional CDF switches, plus unit spacing
    let mut cuts = vec![lower, h];
    if rho != 0.0 {
        let c = k / rho;
        for d in [-3.0, -1.0, 0.0, 1.0, 3.0] {
            let p = c + d * sd / rho.abs();
            if p > lower && p < h {
                cuts.push(p);
            }
        }
    }
    let mut p = -8.0;
    while p < h {
        if p > lower {
            cuts.push(p);
        }
        p += 1.0;
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2).map(|w| integrate(f, w[0], w[1], QUAD_TOL).integral).sum()
}

pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

pub fn logspace(a_exp: f64, b_exp: f64, n: usize) -> Vec<f64> {
    linspace(a_exp, b_exp, n).into_iter().map(|e| 10f64.powf(e)).collect()
}

/// `(1/T) int_0^T f(t)^2 dt` by composite Simpson on `n` (even) panels.
pub fn mean_square(period: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    assert!(n % 2 == 0);
    let h = period / n as f64;
    let mut acc = 0.0;
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let v = f(i as f64 * h);
        acc += w * v * v;
    }
    acc * h / 3.0 / period
}
