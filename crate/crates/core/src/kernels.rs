//! Homogeneous spatial covariance functions and their spectral samplers.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::fastmath::{exp_nonpositive, ln_at_least_one};
use crate::quadrature::{self, Verdict, DEFAULT_MARGIN};

/// A radial profile `r -> Q(r)` supplied by the caller.
pub type RadialProfile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum KernelFamily {
    /// `sigma2 * exp(-|x|^2 / (2 l^2))`
    Gaussian { length_scale: f64 },
    /// `sigma2 * (1 + |x|^2)^(-lambda)`
    Cauchy { lambda: f64 },
    /// `sigma2 * profile(|x|)`, where `profile(0) = 1`. Evaluation only.
    UserRadial { profile: RadialProfile },
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Gaussian { .. } => "gaussian",
            KernelFamily::Cauchy { .. } => "cauchy",
            KernelFamily::UserRadial { .. } => "user-radial",
        }
    }
}

impl fmt::Debug for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFamily::Gaussian { length_scale } => {
                write!(f, "Gaussian {{ length_scale: {length_scale} }}")
            }
            KernelFamily::Cauchy { lambda } => write!(f, "Cauchy {{ lambda: {lambda} }}"),
            KernelFamily::UserRadial { .. } => write!(f, "UserRadial"),
        }
    }
}

/// The spatial covariance `Q` of the environment.
#[derive(Debug, Clone)]
pub struct CovarianceKernel {
    family: KernelFamily,
    sigma2: f64,
    dim: usize,
}

impl CovarianceKernel {
    pub fn gaussian(sigma2: f64, length_scale: f64, dim: usize) -> Result<Self> {
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(invalid("length_scale", format!("must be > 0, got {length_scale}")));
        }
        Self::new(KernelFamily::Gaussian { length_scale }, sigma2, dim)
    }

    pub fn cauchy(sigma2: f64, lambda: f64, dim: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be > 0, got {lambda}")));
        }
        Self::new(KernelFamily::Cauchy { lambda }, sigma2, dim)
    }

    /// `profile` is the normalized radial shape; `profile(0)` must be 1.
    pub fn user_radial<F>(sigma2: f64, dim: usize, profile: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if profile(0.0) != 1.0 {
            return Err(invalid("profile", "profile(0) must equal 1"));
        }
        Self::new(
            KernelFamily::UserRadial {
                profile: Arc::new(profile),
            },
            sigma2,
            dim,
        )
    }

    fn new(family: KernelFamily, sigma2: f64, dim: usize) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(invalid("sigma2", format!("must be > 0, got {sigma2}")));
        }
        if dim == 0 {
            return Err(invalid("dim", "must be >= 1"));
        }
        Ok(Self { family, sigma2, dim })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// `Q(0)`.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_spectral_sampler(&self) -> bool {
        !matches!(self.family, KernelFamily::UserRadial { .. })
    }

    /// `Q` as a function of the squared distance.
    #[inline]
    pub fn at_sq_distance(&self, r2: f64) -> f64 {
        match &self.family {
            KernelFamily::Gaussian { length_scale } => {
                self.sigma2 * (-r2 / (2.0 * length_scale * length_scale)).exp()
            }
            KernelFamily::Cauchy { lambda } => self.sigma2 * (-lambda * r2.ln_1p()).exp(),
            KernelFamily::UserRadial { profile } => self.sigma2 * profile(r2.sqrt()),
        }
    }

    /// Replaces each squared distance in `r2` by `Q` at that distance.
    /// Agrees with [`Self::at_sq_distance`] to a few ulp.
    pub fn at_sq_distances(&self, r2: &mut [f64]) {
        let s2 = self.sigma2;
        match &self.family {
            KernelFamily::Gaussian { length_scale } => {
                let c = -0.5 / (length_scale * length_scale);
                for v in r2.iter_mut() {
                    *v = s2 * exp_nonpositive(c * *v);
                }
            }
            KernelFamily::Cauchy { lambda } => {
                for v in r2.iter_mut() {
                    *v = s2 * exp_nonpositive(-lambda * ln_at_least_one(1.0 + *v));
                }
            }
            KernelFamily::UserRadial { profile } => {
                for v in r2.iter_mut() {
                    *v = s2 * profile(v.sqrt());
                }
            }
        }
    }

    /// Radial profile `Q~(r)`.
    pub fn radial(&self, r: f64) -> f64 {
        self.at_sq_distance(r * r)
    }

    /// `ln Q~(r)`, finite even where `Q~(r)` underflows.
    pub fn ln_radial(&self, r: f64) -> f64 {
        let r2 = r * r;
        match &self.family {
            KernelFamily::Gaussian { length_scale } => {
                self.sigma2.ln() - r2 / (2.0 * length_scale * length_scale)
            }
            KernelFamily::Cauchy { lambda } => self.sigma2.ln() - lambda * r2.ln_1p(),
            KernelFamily::UserRadial { profile } => self.sigma2.ln() + profile(r).ln(),
        }
    }

    /// `Q(x)`.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.at_sq_distance(x.iter().map(|v| v * v).sum()))
    }

    /// `Q(x - y)`.
    pub fn eval_between(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        Ok(self.at_sq_distance(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()))
    }

    pub(crate) fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// One draw from the normalized spectral measure `Q^ / Q(0)`, so that
    /// `E[cos(lambda . x)] = Q(x) / Q(0)`.
    ///
    /// The Cauchy family uses `(1 + |x|^2)^(-lambda) = E[exp(-u |x|^2)]` with
    /// `u ~ Gamma(lambda, 1)`: given `u`, the frequency is `N(0, 2u I)`.
    pub fn sample_frequency<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let scale = match &self.family {
            KernelFamily::Gaussian { length_scale } => 1.0 / length_scale,
            KernelFamily::Cauchy { lambda } => {
                let gamma = Gamma::new(*lambda, 1.0)
                    .map_err(|e| invalid("lambda", e.to_string()))?;
                let u: f64 = gamma.sample(rng);
                (2.0 * u).sqrt()
            }
            KernelFamily::UserRadial { .. } => return Err(Error::UnsupportedFamily("user-radial")),
        };
        Ok((0..self.dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
            .collect())
    }

    /// `int_0^r_max r Q~(r) dr` with a tail verdict from the power-law
    /// exponent of `r Q~(r)` over `[r_max / 10, r_max]`.
    pub fn radial_tail_integral(&self, r_max: f64, tol: f64) -> Result<RadialTailIntegral> {
        if !(r_max > 0.0) {
            return Err(invalid("r_max", format!("must be > 0, got {r_max}")));
        }
        let log_integrand = |r: f64| r.ln() + self.ln_radial(r);
        let integral = quadrature::improper_integral(log_integrand, r_max, tol, DEFAULT_MARGIN)?;
        Ok(RadialTailIntegral {
            value: integral.value(),
            tail_exponent: integral.tail_exponent,
            verdict: integral.verdict,
        })
    }

    /// Checks that the radial profile is nonincreasing on a log grid of
    /// `(0, r_max]`.
    pub fn check_nonincreasing(&self, r_max: f64) -> Result<()> {
        if !matches!(self.family, KernelFamily::UserRadial { .. }) {
            return Ok(());
        }
        const POINTS: usize = 2001;
        let lo = (r_max * 1e-6).ln();
        let hi = r_max.ln();
        let mut prev = self.radial(0.0);
        for i in 0..POINTS {
            let r = (lo + (hi - lo) * i as f64 / (POINTS - 1) as f64).exp();
            let q = self.radial(r);
            if q > prev * (1.0 + 1e-12) {
                return Err(Error::NonMonotoneProfile(r));
            }
            prev = q;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialTailIntegral {
    pub value: f64,
    pub tail_exponent: f64,
    pub verdict: Verdict,
}
