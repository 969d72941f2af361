//! Closed-form bounds and constants, quadrature of the strong-disorder
//! criterion, and Monte Carlo probes of replica-side exponential moments.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::kernels::{CovarianceKernel, KernelFamily};
use crate::quadrature::{self, ImproperIntegral, Verdict};
use crate::special::ln_chi_square_survival;
use crate::stats::{compensated_sum, Estimate};

/// `E[Z_t] = exp(beta^2 Q(0) t / 2)`.
pub fn annealed_mean(beta: f64, q0: f64, t: f64) -> f64 {
    (0.5 * beta * beta * q0 * t).exp()
}

/// `beta^2 Q(0) / 2`, the annealed upper bound on the free energy.
pub fn free_energy_upper_bound(beta: f64, q0: f64) -> f64 {
    0.5 * beta * beta * q0
}

/// `2 exp(-t c^2 / (4 Q(0) beta^2))`, the bound on
/// `P(|log Z_t / t - p_t| > c)`.
pub fn concentration_bound(c: f64, t: f64, beta: f64, q0: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("t", "must be > 0"));
    }
    if !(beta > 0.0) {
        return Err(invalid("beta", "must be > 0"));
    }
    Ok(2.0 * (-t * c * c / (4.0 * q0 * beta * beta)).exp())
}

/// Conjugate exponent `p / (p - 1)`.
pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

/// `kappa = beta^2 Q(0) (1 - 4q)^2 / (2q)` with `q` conjugate to `p`.
pub fn kappa(beta: f64, q0: f64, p: f64) -> Result<f64> {
    if !(p > 1.0) {
        return Err(invalid("p", format!("must be > 1, got {p}")));
    }
    let q = conjugate(p);
    let a = 1.0 - 4.0 * q;
    Ok(0.5 * beta * beta * q0 * a * a / q)
}

/// `ln P(|w^1_s - w^2_s| > r)` for two independent Brownian motions in
/// `R^d`; the difference is `N(0, 2s I)`, so this is the chi-square(d)
/// survival function at `r^2 / (2s)`.
pub fn ln_pair_exit_probability(s: f64, r: f64, d: usize) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    ln_chi_square_survival(r * r / (2.0 * s), d)
}

pub fn pair_exit_probability(s: f64, r: f64, d: usize) -> Result<f64> {
    if !(s > 0.0) {
        return Err(invalid("s", "must be > 0"));
    }
    if !(r >= 0.0) {
        return Err(invalid("r", "must be >= 0"));
    }
    if d == 0 {
        return Err(invalid("d", "must be >= 1"));
    }
    Ok(ln_pair_exit_probability(s, r, d).exp())
}

/// Parameters of the sufficient condition for strong disorder with
/// `Lambda_s` the centered ball of radius `s^alpha`.
///
/// The fractional power is tied to the Hölder pair: `theta = 1/q`.
#[derive(Debug, Clone)]
pub struct DisorderCriterionSpec {
    pub kernel: CovarianceKernel,
    pub beta: f64,
    pub p: f64,
    pub alpha: f64,
    /// Upper end of the quadrature range standing in for infinity.
    pub s_max: f64,
    pub rel_tol: f64,
    /// Margin on fitted tail exponents around -1.
    pub margin: f64,
}

/// Tail-exponent margin for the criterion integrals; see
/// [`DisorderCriterionSpec::margin`].
pub const CRITERION_MARGIN: f64 = 0.02;

impl DisorderCriterionSpec {
    pub fn new(kernel: CovarianceKernel, beta: f64, p: f64, alpha: f64) -> Result<Self> {
        let spec = Self {
            kernel,
            beta,
            p,
            alpha,
            s_max: 1.0e8,
            rel_tol: 1.0e-10,
            margin: CRITERION_MARGIN,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", "must be >= 0"));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(invalid("p", "must be > 1"));
        }
        if !(self.alpha > 1.0) {
            return Err(invalid("alpha", "must be > 1"));
        }
        if !(self.s_max > 10.0) {
            return Err(invalid("s_max", "must exceed 10"));
        }
        if let KernelFamily::Cauchy { lambda } = self.kernel.family() {
            if *lambda < 0.5 && self.alpha * lambda >= 0.5 {
                return Err(invalid(
                    "alpha",
                    format!("alpha * lambda must be < 1/2, got {}", self.alpha * lambda),
                ));
            }
        }
        Ok(())
    }

    pub fn q(&self) -> f64 {
        conjugate(self.p)
    }

    pub fn theta(&self) -> f64 {
        1.0 / self.q()
    }

    pub fn kappa(&self) -> f64 {
        kappa(self.beta, self.kernel.sigma2(), self.p).expect("validated p")
    }

    /// `gamma = beta^2 theta (1 - theta) / 2`.
    pub fn gamma(&self) -> f64 {
        let th = self.theta();
        0.5 * self.beta * self.beta * th * (1.0 - th)
    }

    /// `ln v(s)`, with `v(s) = inf_{|x| <= s^alpha} Q(x) = Q~(s^alpha)` for a
    /// radially nonincreasing kernel.
    pub fn ln_v(&self, s: f64) -> f64 {
        self.kernel.ln_radial(s.powf(self.alpha))
    }

    /// `ln w(s) = ln v(s) + (1/p) ln P(|w^1_s - w^2_s| > s^alpha) + kappa s`.
    pub fn ln_w(&self, s: f64) -> f64 {
        let radius = s.powf(self.alpha);
        self.ln_v(s)
            + ln_pair_exit_probability(s, radius, self.kernel.dim()) / self.p
            + self.kappa() * s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionReport {
    pub v: ImproperIntegral,
    pub w: ImproperIntegral,
}

impl CriterionReport {
    /// `int v = infinity` and `int w < infinity`.
    pub fn satisfied(&self) -> bool {
        self.v.verdict == Verdict::Divergent && self.w.verdict == Verdict::Finite
    }
}

pub fn disorder_criterion_h1(spec: &DisorderCriterionSpec) -> Result<CriterionReport> {
    spec.validate()?;
    spec.kernel.check_nonincreasing(spec.s_max.powf(spec.alpha).min(1.0e12))?;
    let v = quadrature::improper_integral(|s| spec.ln_v(s), spec.s_max, spec.rel_tol, spec.margin)?;
    let w = quadrature::improper_integral(|s| spec.ln_w(s), spec.s_max, spec.rel_tol, spec.margin)?;
    Ok(CriterionReport { v, w })
}

/// `delta * exp(-gamma int_0^t v)` with `delta = 1 + gamma int_0^inf w`,
/// kept in log form: `delta` overflows for moderate `kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalMomentBound {
    pub ln_delta: f64,
    pub gamma: f64,
    pub v_integral: f64,
    pub ln_bound: f64,
}

impl FractionalMomentBound {
    /// The bound itself; `+inf` when it exceeds the floating-point range.
    pub fn value(&self) -> f64 {
        self.ln_bound.exp()
    }
}

pub fn fractional_moment_bound(spec: &DisorderCriterionSpec, t: f64) -> Result<FractionalMomentBound> {
    if !(t >= 0.0) {
        return Err(invalid("t", "must be >= 0"));
    }
    let report = disorder_criterion_h1(spec)?;
    if report.w.verdict != Verdict::Finite {
        return Err(invalid(
            "spec",
            format!("integral of w is not finite (verdict {})", report.w.verdict.as_str()),
        ));
    }
    fractional_moment_bound_with(spec, &report, t)
}

/// Same as [`fractional_moment_bound`] for a criterion report that has
/// already been computed.
pub fn fractional_moment_bound_with(
    spec: &DisorderCriterionSpec,
    report: &CriterionReport,
    t: f64,
) -> Result<FractionalMomentBound> {
    let gamma = spec.gamma();
    // ln(1 + gamma W) = softplus(ln gamma + ln W)
    let x = gamma.ln() + report.w.log_value;
    let ln_delta = if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    let v_integral = v_integral(spec, t)?;
    Ok(FractionalMomentBound {
        ln_delta,
        gamma,
        v_integral,
        ln_bound: ln_delta - gamma * v_integral,
    })
}

/// `int_0^t v(s) ds`.
pub fn v_integral(spec: &DisorderCriterionSpec, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let edges = quadrature::decade_panels(t);
    let mut total = 0.0;
    for w in edges.windows(2) {
        total += quadrature::integrate(|s| spec.ln_v(s).exp(), w[0], w[1], spec.rel_tol, 0.0)?.value;
    }
    Ok(total)
}

/// Monte Carlo estimate of an exponential path functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub value: f64,
    pub std_error: f64,
    /// The largest 1% of samples carry more than half of the sum; the
    /// standard error is then not trustworthy.
    pub heavy_tail: bool,
    pub n_samples: usize,
}

impl MomentEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let e = Estimate::from_samples(samples);
        Self {
            value: e.mean,
            std_error: e.std_error,
            heavy_tail: heavy_tail(samples),
            n_samples: samples.len(),
        }
    }
}

/// True when the top 1% of (nonnegative) samples carry more than 50% of the
/// total.
pub fn heavy_tail(samples: &[f64]) -> bool {
    if samples.is_empty() {
        return false;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = (samples.len() / 100).max(1);
    let total = compensated_sum(sorted.iter().copied());
    let head = compensated_sum(sorted[..top].iter().copied());
    total > 0.0 && head > 0.5 * total
}

/// Index `n` with `n * dt = t`, or an error when `t` is not on the grid.
pub fn grid_index(t: f64, dt: f64) -> Result<usize> {
    let n = (t / dt).round();
    if !(t >= 0.0) || (n * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::NotOnGrid(t));
    }
    Ok(n as usize)
}

/// Trapezoidal `int_0^{t_n} f(w_s) ds` along a path sampled on the grid,
/// for every `n`, given the values `f(w_{t_i})`.
fn running_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    out.push(0.0);
    let mut acc = 0.0;
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Brownian path from the origin, returning `Q(scale * w_{t_i})` on the grid.
fn kernel_along_path<R: Rng + ?Sized>(
    kernel: &CovarianceKernel,
    scale: f64,
    n_steps: usize,
    dt: f64,
    rng: &mut R,
) -> Vec<f64> {
    let d = kernel.dim();
    let sd = dt.sqrt();
    let mut x = vec![0.0; d];
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(kernel.sigma2());
    for _ in 0..n_steps {
        let mut r2 = 0.0;
        for xc in x.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *xc += sd * z;
            r2 += *xc * *xc;
        }
        out.push(kernel.at_sq_distance(scale * scale * r2));
    }
    out
}

/// Replica-side Monte Carlo for
/// `E[Z_t^2] = E_w[exp(beta^2 (Q(0) t + int_0^t Q(w^1_s - w^2_s) ds))]`,
/// sampling the replica difference as `sqrt(2)` times one Brownian path and
/// integrating with the trapezoidal rule on the grid of step `dt`.
pub fn annealed_second_moment<R: Rng + ?Sized>(
    kernel: &CovarianceKernel,
    beta: f64,
    t: f64,
    dt: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<MomentEstimate> {
    if n_samples < 2 {
        return Err(invalid("n_samples", "must be >= 2"));
    }
    let n_steps = grid_index(t, dt)?;
    if beta == 0.0 || n_steps == 0 {
        return Ok(MomentEstimate {
            value: 1.0,
            std_error: 0.0,
            heavy_tail: false,
            n_samples,
        });
    }
    let b2 = beta * beta;
    let q0t = kernel.sigma2() * t;
    let samples: Vec<f64> = (0..n_samples)
        .map(|_| {
            let q = kernel_along_path(kernel, std::f64::consts::SQRT_2, n_steps, dt, rng);
            let integral = running_trapezoid(&q, dt)[n_steps];
            (b2 * (q0t + integral)).exp()
        })
        .collect();
    Ok(MomentEstimate::from_samples(&samples))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisProbeRow {
    pub horizon: f64,
    pub estimate: MomentEstimate,
}

/// Estimates `E_w[exp((beta^2 / 2) int_0^T Q(w_s) ds)]` for each horizon `T`
/// in `horizons`, all from the same `n_paths` Brownian paths.
pub fn hypothesis_h_probe<R: Rng + ?Sized>(
    kernel: &CovarianceKernel,
    beta: f64,
    horizons: &[f64],
    dt: f64,
    n_paths: usize,
    rng: &mut R,
) -> Result<Vec<HypothesisProbeRow>> {
    if n_paths < 2 {
        return Err(invalid("n_paths", "must be >= 2"));
    }
    let indices = horizons
        .iter()
        .map(|&t| grid_index(t, dt))
        .collect::<Result<Vec<_>>>()?;
    let n_steps = indices.iter().copied().max().unwrap_or(0);
    let half_b2 = 0.5 * beta * beta;
    let mut samples = vec![Vec::with_capacity(n_paths); horizons.len()];
    for _ in 0..n_paths {
        let q = kernel_along_path(kernel, 1.0, n_steps, dt, rng);
        let integrals = running_trapezoid(&q, dt);
        for (col, &n) in samples.iter_mut().zip(&indices) {
            col.push(if beta == 0.0 { 1.0 } else { (half_b2 * integrals[n]).exp() });
        }
    }
    Ok(horizons
        .iter()
        .zip(samples)
        .map(|(&horizon, s)| HypothesisProbeRow {
            horizon,
            estimate: MomentEstimate::from_samples(&s),
        })
        .collect())
}

/// Relative increase of the estimate over the last two horizons.
pub fn saturation(rows: &[HypothesisProbeRow]) -> f64 {
    match rows {
        [.., a, b] => (b.estimate.value - a.estimate.value) / a.estimate.value,
        _ => f64::NAN,
    }
}
