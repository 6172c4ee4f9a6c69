//! Band-limited noise covariance: the sinc kernel sampled on the receive
//! grid, its pseudo-inverse and correlated Gaussian draws.

use std::sync::OnceLock;

use faer::{Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{PsdFactor, SpectralFactor, DEFAULT_EIG_FLOOR};
use crate::special::sinc;

/// Normalized noise covariance `[R]_ij = sinc(spacing * |i - j| / kappa)`.
///
/// The matrix is Toeplitz and is stored by lag; the dense matrix only
/// exists transiently while the factorization is built.
#[derive(Debug)]
pub struct NoiseCov {
    kappa: u32,
    spacing: usize,
    lags: Vec<f64>,
    eig_floor: f64,
    factor: OnceLock<Result<PsdFactor>>,
}

impl Clone for NoiseCov {
    /// Clones the kernel; the factorization is recomputed on demand.
    fn clone(&self) -> Self {
        Self {
            kappa: self.kappa,
            spacing: self.spacing,
            lags: self.lags.clone(),
            eig_floor: self.eig_floor,
            factor: OnceLock::new(),
        }
    }
}

/// Covariance of `n` consecutive samples taken at `kappa` times the Nyquist rate.
pub fn build_covariance(n: usize, kappa: u32) -> Result<NoiseCov> {
    NoiseCov::with_spacing(n, kappa, 1)
}

impl NoiseCov {
    /// Covariance of `n` samples taken every `spacing` grid points of a
    /// `kappa`-times oversampled grid.
    pub fn with_spacing(n: usize, kappa: u32, spacing: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("covariance dimension must be at least 1"));
        }
        if kappa == 0 {
            return Err(Error::domain("oversampling factor must be at least 1"));
        }
        if spacing == 0 {
            return Err(Error::domain("sample spacing must be at least 1"));
        }
        let k = f64::from(kappa);
        let lags = (0..n).map(|d| sinc((spacing * d) as f64 / k)).collect();
        Ok(Self {
            kappa,
            spacing,
            lags,
            eig_floor: DEFAULT_EIG_FLOOR,
            factor: OnceLock::new(),
        })
    }

    /// Override the relative eigenvalue floor used for pseudo-inversion.
    pub fn with_eig_floor(mut self, eig_floor: f64) -> Result<Self> {
        if !(eig_floor > 0.0 && eig_floor < 1.0) {
            return Err(Error::domain("eig_floor must lie in (0, 1)"));
        }
        self.eig_floor = eig_floor;
        self.factor = OnceLock::new();
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.lags.len()
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn spacing(&self) -> usize {
        self.spacing
    }

    pub fn eig_floor(&self) -> f64 {
        self.eig_floor
    }

    /// Correlation at lag `d` (in samples).
    #[inline]
    pub fn lag(&self, d: usize) -> f64 {
        self.lags[d]
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.lags[i.abs_diff(j)]
    }

    /// True when all off-diagonal correlations vanish exactly.
    pub fn is_identity(&self) -> bool {
        self.lags[1..].iter().all(|&r| r == 0.0)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.n();
        Mat::from_fn(n, n, |i, j| self.entry(i, j))
    }

    /// Factorization, computed once. The identity is recognized directly;
    /// everything else goes through the thresholded eigendecomposition.
    pub fn factor(&self) -> Result<&PsdFactor> {
        self.factor
            .get_or_init(|| {
                if self.is_identity() {
                    Ok(PsdFactor::Identity(self.n()))
                } else {
                    let dense = self.to_dense();
                    SpectralFactor::new(dense.as_ref(), self.eig_floor).map(PsdFactor::Spectral)
                }
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Eigenvalues of the covariance in ascending order.
    pub fn spectrum(&self) -> Result<Vec<f64>> {
        Ok(match self.factor()? {
            PsdFactor::Identity(n) => vec![1.0; *n],
            PsdFactor::Spectral(spec) => spec.spectrum().to_vec(),
            PsdFactor::Cholesky(_) => unreachable!("noise covariance is never Cholesky-factored"),
        })
    }
}

/// Pseudo-inverse solve `R^+ rhs` with eigenvalues below
/// `eig_floor * lambda_max` suppressed.
pub fn psd_solve(cov: &NoiseCov, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if rhs.nrows() != cov.n() {
        return Err(Error::domain(format!(
            "right-hand side has {} rows, covariance is {}x{}",
            rhs.nrows(),
            cov.n(),
            cov.n()
        )));
    }
    Ok(cov.factor()?.solve(rhs))
}

/// Draws zero-mean Gaussian vectors with covariance `R`, generated in the
/// retained eigenspace: `eta = V diag(sqrt(lambda)) w`.
///
/// Draw `d` uses ChaCha8 stream `d` under the given seed, so any draw can be
/// regenerated independently of the others.
pub struct NoiseSampler<'a> {
    factor: &'a PsdFactor,
    n: usize,
    seed: u64,
    white: Vec<f64>,
}

impl<'a> NoiseSampler<'a> {
    pub fn new(cov: &'a NoiseCov, seed: u64) -> Result<Self> {
        let factor = cov.factor()?;
        let rank = match factor {
            PsdFactor::Spectral(spec) => spec.rank(),
            _ => cov.n(),
        };
        Ok(Self {
            factor,
            n: cov.n(),
            seed,
            white: vec![0.0; rank],
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Writes draw number `draw` into `out` (length `n`).
    pub fn fill(&mut self, draw: u64, out: &mut [f64]) {
        assert_eq!(out.len(), self.n, "output buffer has the wrong length");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(draw);
        match self.factor {
            PsdFactor::Spectral(spec) => {
                let values = spec.retained_values();
                for (w, &lambda) in self.white.iter_mut().zip(values) {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *w = z * lambda.sqrt();
                }
                let vecs = spec.retained_vectors();
                out.fill(0.0);
                for (r, &w) in self.white.iter().enumerate() {
                    let col = vecs.col(r);
                    for (o, &v) in out.iter_mut().zip(col.iter()) {
                        *o += v * w;
                    }
                }
            }
            _ => {
                for o in out.iter_mut() {
                    *o = StandardNormal.sample(&mut rng);
                }
            }
        }
    }
}

/// `draws x n` matrix of correlated noise rows; row `d` is draw `d`.
pub fn sample_noise(cov: &NoiseCov, seed: u64, draws: usize) -> Result<Mat<f64>> {
    let mut sampler = NoiseSampler::new(cov, seed)?;
    let n = cov.n();
    let mut out = Mat::zeros(draws, n);
    let mut row = vec![0.0; n];
    for d in 0..draws {
        sampler.fill(d as u64, &mut row);
        for (j, &v) in row.iter().enumerate() {
            out[(d, j)] = v;
        }
    }
    Ok(out)
}
