//! Time increments of the Gaussian landscape `B`.
//!
//! Over one grid step `[t_i, t_i + dt)` the increment `dB_i(x)` is a centered
//! Gaussian field with covariance `dt * Q(x - y)`, independent across steps.
//! Two samplers are provided:
//!
//! * [`EnvMode::Spectral`]: random Fourier features. `K` frequencies are drawn
//!   once from `Q^ / Q(0)` and frozen; each step draws fresh coefficients and
//!   `dB_i(x) = sqrt(dt Q(0) / K) * sum_k xi_k cos(l_k . x) + eta_k sin(l_k . x)`.
//!   The field is one consistent landscape: any set of points queried at a step
//!   sees the same coefficients.
//! * [`EnvMode::ExactCholesky`]: an exact joint draw at the queried points via
//!   a Cholesky factor of `dt * Q(x_a - x_b)`. **Each query is a fresh joint
//!   draw**: two different point sets at the same step are not mutually
//!   consistent. Use it as the small-m oracle for runs that query every step
//!   exactly once with the full replica set.
//!
//! All randomness at step `i` comes from the stream `(seed, Coefficients, i)`,
//! so a query is a pure function of `(seed, step, points)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::collections::HashMap;

use crate::error::{invalid, Error, Result};
use crate::fastmath::{cos_reduced, cos_sin_dot, TrigScratch, REDUCTION_LIMIT};
use std::f64::consts::PI;
use crate::kernels::CovarianceKernel;
use crate::seed::{stream, Purpose};

/// First diagonal jitter, relative to `dt * Q(0)`.
pub const JITTER_START: f64 = 1.0e-10;
/// Largest jitter tried before the factorization is declared failed.
pub const JITTER_MAX: f64 = 1.0e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvMode {
    ExactCholesky,
    Spectral,
}

impl EnvMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvMode::ExactCholesky => "exact-cholesky",
            EnvMode::Spectral => "spectral",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact-cholesky" => Some(EnvMode::ExactCholesky),
            "spectral" => Some(EnvMode::Spectral),
            _ => None,
        }
    }
}

/// Frozen random-feature frequencies, stored one coordinate per row so that
/// phases for a point are a sum of contiguous scaled rows.
#[derive(Debug, Clone)]
struct Features {
    by_dim: Vec<Vec<f64>>,
    max_abs: f64,
}

impl Features {
    fn count(&self) -> usize {
        self.by_dim[0].len()
    }

    fn phases_into(&self, x: &[f64], phase: &mut [f64]) {
        let first = &self.by_dim[0];
        for (p, l) in phase.iter_mut().zip(first) {
            *p = l * x[0];
        }
        for (c, row) in self.by_dim.iter().enumerate().skip(1) {
            for (p, l) in phase.iter_mut().zip(row) {
                *p += l * x[c];
            }
        }
    }

    /// For every point j: `out[j] = sum_k amp[k] cos(l_k . x_j - shift[k])`,
    /// summed in feature order. `coords` holds the points dimension-major.
    fn shifted_cos_sums(&self, coords: &[Vec<f64>], shift: &[f64], amp: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let reach = coords
            .iter()
            .map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .sum::<f64>()
            * self.max_abs
            + PI;
        let fast = reach < REDUCTION_LIMIT;
        let n = out.len();
        let mut ph = vec![0.0; n];
        for k in 0..self.count() {
            ph.fill(-shift[k]);
            for (row, c) in self.by_dim.iter().zip(coords) {
                let w = row[k];
                for (p, x) in ph.iter_mut().zip(&c[..n]) {
                    *p += w * x;
                }
            }
            let a = amp[k];
            if fast {
                for (o, p) in out.iter_mut().zip(&ph) {
                    *o += a * cos_reduced(*p);
                }
            } else {
                for (o, p) in out.iter_mut().zip(&ph) {
                    *o += a * p.cos();
                }
            }
        }
    }
}

/// One frozen sample of the landscape's time increments.
#[derive(Debug, Clone)]
pub struct EnvironmentRealization {
    kernel: CovarianceKernel,
    mode: EnvMode,
    n_steps: usize,
    dt: f64,
    seed: u64,
    features: Option<Features>,
}

/// Reusable buffers for spectral queries.
#[derive(Debug, Default, Clone)]
pub struct QueryScratch {
    shift: Vec<f64>,
    amp: Vec<f64>,
    coords: Vec<Vec<f64>>,
}

impl EnvironmentRealization {
    /// Builds a realization. In spectral mode the `k_features` frequencies are
    /// drawn here from the stream `(seed, Frequencies, 0)`; exact mode defers
    /// all work to queries and ignores `k_features`.
    pub fn new(
        kernel: &CovarianceKernel,
        mode: EnvMode,
        n_steps: usize,
        dt: f64,
        k_features: usize,
        seed: u64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", format!("must be > 0, got {dt}")));
        }
        let features = match mode {
            EnvMode::ExactCholesky => None,
            EnvMode::Spectral => {
                if !kernel.has_spectral_sampler() {
                    return Err(Error::UnsupportedFamily(kernel.family().name()));
                }
                if k_features == 0 {
                    return Err(invalid("k_features", "must be >= 1"));
                }
                let mut rng = stream(seed, Purpose::Frequencies, 0);
                let mut by_dim = vec![Vec::with_capacity(k_features); kernel.dim()];
                for _ in 0..k_features {
                    let w = kernel.sample_frequency(&mut rng)?;
                    for (row, v) in by_dim.iter_mut().zip(w) {
                        row.push(v);
                    }
                }
                let max_abs = by_dim
                    .iter()
                    .flatten()
                    .fold(0.0f64, |m, v| m.max(v.abs()));
                Some(Features { by_dim, max_abs })
            }
        };
        Ok(Self {
            kernel: kernel.clone(),
            mode,
            n_steps,
            dt,
            seed,
            features,
        })
    }

    pub fn kernel(&self) -> &CovarianceKernel {
        &self.kernel
    }

    pub fn mode(&self) -> EnvMode {
        self.mode
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn k_features(&self) -> Option<usize> {
        self.features.as_ref().map(Features::count)
    }

    /// Frozen frequencies as points in R^d (spectral mode only).
    pub fn frequencies(&self) -> Option<Vec<Vec<f64>>> {
        self.features.as_ref().map(|f| {
            (0..f.count())
                .map(|k| f.by_dim.iter().map(|row| row[k]).collect())
                .collect()
        })
    }

    /// `Q_K(r) = (Q(0) / K) sum_k cos(l_k . r)`, the conditional covariance
    /// (per unit time) of the spectral field given its frequencies.
    pub fn feature_covariance(&self, r: &[f64]) -> Result<f64> {
        let f = self.spectral_features()?;
        self.kernel.check_dim(r)?;
        let mut phase = vec![0.0; f.count()];
        f.phases_into(r, &mut phase);
        let ones = vec![1.0; phase.len()];
        let zeros = vec![0.0; phase.len()];
        let dot = cos_sin_dot(&phase, &ones, &zeros, &mut TrigScratch::default());
        Ok(self.kernel.sigma2() / f.count() as f64 * dot)
    }

    /// `max |Q_K(x - y) - Q(x - y)|` over the given pairs.
    pub fn spectral_covariance_error(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<f64> {
        self.spectral_features()?;
        let mut worst = 0.0f64;
        for (x, y) in pairs {
            let r: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            let err = (self.feature_covariance(&r)? - self.kernel.eval(&r)?).abs();
            worst = worst.max(err);
        }
        Ok(worst)
    }

    fn spectral_features(&self) -> Result<&Features> {
        self.features.as_ref().ok_or(Error::WrongMode {
            required: EnvMode::Spectral.as_str(),
            actual: self.mode.as_str(),
        })
    }

    /// Field increments over step `step` at `points` (row-major, `d` values
    /// per point).
    pub fn increments_at(&self, step: usize, points: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; points.len() / self.kernel.dim().max(1)];
        self.increments_into(step, points, &mut out, &mut QueryScratch::default())?;
        Ok(out)
    }

    pub fn increments_into(
        &self,
        step: usize,
        points: &[f64],
        out: &mut [f64],
        scratch: &mut QueryScratch,
    ) -> Result<()> {
        if step >= self.n_steps {
            return Err(Error::StepOutOfRange {
                step,
                n_steps: self.n_steps,
            });
        }
        let d = self.kernel.dim();
        if points.len() % d != 0 || points.len() / d != out.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len() * d,
                got: points.len(),
            });
        }
        match &self.features {
            Some(f) => {
                self.spectral_into(f, step, points, out, scratch);
                Ok(())
            }
            None => self.cholesky_into(step, points, out),
        }
    }

    fn spectral_into(
        &self,
        f: &Features,
        step: usize,
        points: &[f64],
        out: &mut [f64],
        scratch: &mut QueryScratch,
    ) {
        let k = f.count();
        let mut rng = stream(self.seed, Purpose::Coefficients, step as u64);
        scratch.shift.clear();
        scratch.amp.clear();
        let amplitude = (self.dt * self.kernel.sigma2() / k as f64).sqrt();
        // xi cos + eta sin = hypot(xi, eta) cos(phase - atan2(eta, xi))
        for _ in 0..k {
            let xi: f64 = rng.sample(StandardNormal);
            let eta: f64 = rng.sample(StandardNormal);
            scratch.shift.push(eta.atan2(xi));
            scratch.amp.push(amplitude * xi.hypot(eta));
        }
        let d = self.kernel.dim();
        scratch.coords.resize(d, Vec::new());
        for (c, col) in scratch.coords.iter_mut().enumerate() {
            col.clear();
            col.extend(points.iter().skip(c).step_by(d));
        }
        f.shifted_cos_sums(&scratch.coords, &scratch.shift, &scratch.amp, out);
    }

    fn cholesky_into(&self, step: usize, points: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.kernel.dim();
        // Coincident points get one shared draw; this keeps the covariance
        // matrix nonsingular when replicas sit on top of each other.
        let mut index_of: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut unique: Vec<&[f64]> = Vec::new();
        let slot: Vec<usize> = points
            .chunks_exact(d)
            .map(|x| {
                let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
                *index_of.entry(key).or_insert_with(|| {
                    unique.push(x);
                    unique.len() - 1
                })
            })
            .collect();

        let m = unique.len();
        let scale = self.dt * self.kernel.sigma2();
        let cov = DMatrix::from_fn(m, m, |a, b| {
            let r2: f64 = unique[a]
                .iter()
                .zip(unique[b])
                .map(|(u, v)| (u - v) * (u - v))
                .sum();
            self.dt * self.kernel.at_sq_distance(r2)
        });
        let factor = cholesky_with_jitter(cov, scale)?;

        let mut rng = stream(self.seed, Purpose::Coefficients, step as u64);
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let draw = factor * z;
        for (o, s) in out.iter_mut().zip(slot) {
            *o = draw[s];
        }
        Ok(())
    }
}

/// Lower Cholesky factor of `cov`, adding `JITTER_START * scale` to the
/// diagonal on failure and growing it tenfold up to `JITTER_MAX * scale`.
pub fn cholesky_with_jitter(cov: DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    if let Some(c) = cov.clone().cholesky() {
        return Ok(c.unpack());
    }
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let mut m = cov.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter * scale;
        }
        if let Some(c) = m.cholesky() {
            return Ok(c.unpack());
        }
        jitter *= 10.0;
    }
    Err(Error::CholeskyFailed {
        jitter: JITTER_MAX * scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss1() -> CovarianceKernel {
        CovarianceKernel::gaussian(1.0, 1.0, 1).unwrap()
    }

    #[test]
    fn single_feature_is_exact_at_origin() {
        let env = EnvironmentRealization::new(&gauss1(), EnvMode::Spectral, 4, 0.01, 1, 3).unwrap();
        assert_eq!(env.feature_covariance(&[0.0]).unwrap(), 1.0);
    }

    #[test]
    fn same_seed_same_frequencies() {
        let a = EnvironmentRealization::new(&gauss1(), EnvMode::Spectral, 4, 0.01, 64, 3).unwrap();
        let b = EnvironmentRealization::new(&gauss1(), EnvMode::Spectral, 4, 0.01, 64, 3).unwrap();
        assert_eq!(a.frequencies(), b.frequencies());
        let c = EnvironmentRealization::new(&gauss1(), EnvMode::Spectral, 4, 0.01, 64, 4).unwrap();
        assert_ne!(a.frequencies(), c.frequencies());
    }

    #[test]
    fn exact_mode_is_lazy() {
        let env = EnvironmentRealization::new(&gauss1(), EnvMode::ExactCholesky, 1_000_000, 0.01, 0, 3).unwrap();
        assert!(env.frequencies().is_none());
        assert!(matches!(
            env.spectral_covariance_error(&[]),
            Err(Error::WrongMode { .. })
        ));
    }

    #[test]
    fn user_radial_rejected_in_spectral_mode() {
        let k = CovarianceKernel::user_radial(1.0, 1, |r| (-r).exp()).unwrap();
        assert!(matches!(
            EnvironmentRealization::new(&k, EnvMode::Spectral, 4, 0.01, 8, 0),
            Err(Error::UnsupportedFamily(_))
        ));
        assert!(EnvironmentRealization::new(&k, EnvMode::ExactCholesky, 4, 0.01, 8, 0).is_ok());
    }

    #[test]
    fn identical_points_get_identical_increments() {
        for mode in [EnvMode::ExactCholesky, EnvMode::Spectral] {
            let env = EnvironmentRealization::new(&gauss1(), mode, 4, 0.01, 32, 9).unwrap();
            let v = env.increments_at(2, &[0.3, 0.3, -1.0]).unwrap();
            assert_eq!(v[0], v[1]);
        }
    }

    #[test]
    fn replay_is_bit_identical() {
        for mode in [EnvMode::ExactCholesky, EnvMode::Spectral] {
            let env = EnvironmentRealization::new(&gauss1(), mode, 4, 0.01, 32, 9).unwrap();
            let a = env.increments_at(1, &[0.1, 0.5, 2.0]).unwrap();
            let _ = env.increments_at(3, &[7.0]).unwrap();
            let b = env.increments_at(1, &[0.1, 0.5, 2.0]).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn spectral_field_is_consistent_across_point_sets() {
        let env = EnvironmentRealization::new(&gauss1(), EnvMode::Spectral, 4, 0.01, 32, 9).unwrap();
        let a = env.increments_at(1, &[0.1, 0.5]).unwrap();
        let b = env.increments_at(1, &[0.5]).unwrap();
        assert_eq!(a[1], b[0]);
    }

    #[test]
    fn step_out_of_range() {
        let env = EnvironmentRealization::new(&gauss1(), EnvMode::Spectral, 4, 0.01, 8, 0).unwrap();
        assert!(matches!(
            env.increments_at(4, &[0.0]),
            Err(Error::StepOutOfRange { step: 4, n_steps: 4 })
        ));
    }

    #[test]
    fn pair_with_itself_has_zero_spectral_error() {
        let env = EnvironmentRealization::new(&gauss1(), EnvMode::Spectral, 1, 0.01, 16, 0).unwrap();
        let e = env
            .spectral_covariance_error(&[(vec![1.3], vec![1.3])])
            .unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn jitter_ladder_recovers_near_singular_matrix() {
        // Two distinct points closer than the kernel can resolve.
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0 - 1e-17, 1.0 - 1e-17, 1.0]);
        assert!(cholesky_with_jitter(cov, 1.0).is_ok());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            cholesky_with_jitter(bad, 1.0),
            Err(Error::CholeskyFailed { .. })
        ));
    }
}
