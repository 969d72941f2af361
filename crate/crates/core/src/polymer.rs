//! Replica path ensembles, Hamiltonians and the partition-function estimators
//! built on them.
//!
//! Paths live on the grid `t_i = i * dt`, `i = 0..=n_steps`. Along each path
//! the Hamiltonian is the left-point sum
//! `-H_{t_{i+1}} = -H_{t_i} + dB_i(w_{t_i})`, so that for a frozen path
//! `H_{t_n}` is exactly `N(0, t_n Q(0))` at grid level.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::environment::{EnvironmentRealization, QueryScratch};
use crate::error::{invalid, Error, Result};
use crate::stats::{compensated_sum, leave_one_out_sums, log_mean_exp, CompensatedSum, Estimate};

/// `N` Brownian replicas on a common time grid.
///
/// Positions are stored step-major: all replicas at `t_0`, then all at `t_1`
/// and so on, `dim` coordinates per point.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    dim: usize,
    x0: Vec<f64>,
    positions: Vec<f64>,
}

impl PathEnsemble {
    /// Samples `n_paths` Brownian paths from `x0`. Gaussian increments are
    /// drawn replica-major, step-minor, coordinate-innermost.
    pub fn sample<R: Rng + ?Sized>(
        n_paths: usize,
        n_steps: usize,
        dt: f64,
        x0: &[f64],
        rng: &mut R,
    ) -> Result<Self> {
        validate_shape(n_paths, dt, x0)?;
        let dim = x0.len();
        let stride = n_paths * dim;
        let mut positions = vec![0.0; (n_steps + 1) * stride];
        let sd = dt.sqrt();
        for j in 0..n_paths {
            positions[j * dim..(j + 1) * dim].copy_from_slice(x0);
            for i in 0..n_steps {
                let here = i * stride + j * dim;
                let next = here + stride;
                for c in 0..dim {
                    let z: f64 = rng.sample(StandardNormal);
                    positions[next + c] = positions[here + c] + sd * z;
                }
            }
        }
        Ok(Self {
            n_paths,
            n_steps,
            dt,
            dim,
            x0: x0.to_vec(),
            positions,
        })
    }

    /// Builds an ensemble from explicit trajectories, `paths[j][i]` being the
    /// point of replica `j` at grid index `i`.
    pub fn from_paths(paths: &[Vec<Vec<f64>>], dt: f64) -> Result<Self> {
        let n_paths = paths.len();
        let first = paths.first().ok_or_else(|| invalid("paths", "empty ensemble"))?;
        let x0 = first.first().ok_or_else(|| invalid("paths", "empty trajectory"))?.clone();
        validate_shape(n_paths, dt, &x0)?;
        let dim = x0.len();
        let n_steps = first.len() - 1;
        let stride = n_paths * dim;
        let mut positions = vec![0.0; (n_steps + 1) * stride];
        for (j, path) in paths.iter().enumerate() {
            if path.len() != n_steps + 1 {
                return Err(invalid("paths", "trajectories differ in length"));
            }
            if path[0] != x0 {
                return Err(invalid("paths", "trajectories must share their start point"));
            }
            for (i, p) in path.iter().enumerate() {
                if p.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
                }
                positions[i * stride + j * dim..i * stride + (j + 1) * dim].copy_from_slice(p);
            }
        }
        Ok(Self {
            n_paths,
            n_steps,
            dt,
            dim,
            x0,
            positions,
        })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    /// All replica positions at grid index `i`, `dim` values per replica.
    pub fn at_step(&self, i: usize) -> &[f64] {
        let stride = self.n_paths * self.dim;
        &self.positions[i * stride..(i + 1) * stride]
    }

    /// Position of replica `j` at grid index `i`.
    pub fn position(&self, j: usize, i: usize) -> &[f64] {
        let start = (i * self.n_paths + j) * self.dim;
        &self.positions[start..start + self.dim]
    }
}

fn validate_shape(n_paths: usize, dt: f64, x0: &[f64]) -> Result<()> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be >= 1"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    if x0.is_empty() {
        return Err(invalid("x0", "dimension must be >= 1"));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("x0", "coordinates must be finite"));
    }
    Ok(())
}

/// `Z` or `W` at one grid time, with its logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partition {
    pub value: f64,
    pub log: f64,
}

impl Partition {
    fn from_log(log: f64) -> Self {
        Self { value: log.exp(), log }
    }
}

/// A path ensemble together with its Hamiltonians in one environment, at
/// inverse temperature `beta`.
///
/// The Hamiltonians do not depend on `beta`; [`PolymerRun::with_beta`] shares
/// them between temperatures.
#[derive(Debug, Clone)]
pub struct PolymerRun {
    ensemble: Arc<PathEnsemble>,
    environment: Arc<EnvironmentRealization>,
    hamiltonian: Arc<Vec<f64>>,
    beta: f64,
}

impl PolymerRun {
    /// Accumulates `H` along every replica. At each step the field is queried
    /// once, jointly at all replica positions, so every replica sees the same
    /// realization.
    pub fn accumulate(
        ensemble: Arc<PathEnsemble>,
        environment: Arc<EnvironmentRealization>,
        beta: f64,
    ) -> Result<Self> {
        check_beta(beta)?;
        if ensemble.n_steps != environment.n_steps() || ensemble.dt != environment.dt() {
            return Err(Error::GridMismatch {
                path_steps: ensemble.n_steps,
                path_dt: ensemble.dt,
                env_steps: environment.n_steps(),
                env_dt: environment.dt(),
            });
        }
        if ensemble.dim != environment.kernel().dim() {
            return Err(Error::DimensionMismatch {
                expected: environment.kernel().dim(),
                got: ensemble.dim,
            });
        }
        let n = ensemble.n_paths;
        let mut hamiltonian = vec![0.0; (ensemble.n_steps + 1) * n];
        let mut increments = vec![0.0; n];
        let mut scratch = QueryScratch::default();
        for i in 0..ensemble.n_steps {
            environment.increments_into(i, ensemble.at_step(i), &mut increments, &mut scratch)?;
            let (done, rest) = hamiltonian.split_at_mut((i + 1) * n);
            let prev = &done[i * n..];
            for ((h, p), db) in rest[..n].iter_mut().zip(prev).zip(&increments) {
                *h = p - db;
            }
        }
        Ok(Self {
            ensemble,
            environment,
            hamiltonian: Arc::new(hamiltonian),
            beta,
        })
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            beta,
            ..self.clone()
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn ensemble(&self) -> &PathEnsemble {
        &self.ensemble
    }

    pub fn environment(&self) -> &EnvironmentRealization {
        &self.environment
    }

    pub fn n_paths(&self) -> usize {
        self.ensemble.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.ensemble.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.ensemble.dt
    }

    /// Grid time of index `i`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.ensemble.dt
    }

    /// `H_{t_i}` for every replica.
    pub fn hamiltonians(&self, i: usize) -> &[f64] {
        let n = self.ensemble.n_paths;
        &self.hamiltonian[i * n..(i + 1) * n]
    }

    fn check_index(&self, t_index: usize) -> Result<()> {
        if t_index > self.ensemble.n_steps {
            return Err(Error::StepOutOfRange {
                step: t_index,
                n_steps: self.ensemble.n_steps,
            });
        }
        Ok(())
    }

    /// `-beta H_{t_i}` per replica.
    pub fn log_weights(&self, t_index: usize) -> Vec<f64> {
        self.hamiltonians(t_index)
            .iter()
            .map(|h| if self.beta == 0.0 { 0.0 } else { -self.beta * h })
            .collect()
    }

    /// `Z^_t = (1/N) sum_j exp(-beta H_t(w^j))`, summed with a max shift.
    pub fn partition_estimate(&self, t_index: usize) -> Result<Partition> {
        self.check_index(t_index)?;
        Ok(Partition::from_log(log_mean_exp(&self.log_weights(t_index))))
    }

    /// `W^_t = Z^_t exp(-beta^2 Q(0) t / 2)`.
    pub fn normalized_partition(&self, t_index: usize) -> Result<Partition> {
        let z = self.partition_estimate(t_index)?;
        Ok(Partition::from_log(z.log - self.annealed_log(t_index)))
    }

    fn annealed_log(&self, t_index: usize) -> f64 {
        0.5 * self.beta * self.beta * self.environment.kernel().sigma2() * self.time(t_index)
    }

    /// `(t_i, log Z^_{t_i} / t_i)` for `i = 1..=n_steps`.
    pub fn log_partition_series(&self) -> Vec<(f64, f64)> {
        (1..=self.n_steps())
            .map(|i| {
                let t = self.time(i);
                (t, log_mean_exp(&self.log_weights(i)) / t)
            })
            .collect()
    }

    /// Shifted Boltzmann weights `exp(-beta H_j - max)` and the shift.
    fn shifted_weights(&self, t_index: usize) -> (Vec<f64>, f64) {
        let lw = self.log_weights(t_index);
        let peak = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lw.iter().map(|x| (x - peak).exp()).collect(), peak)
    }

    fn pair_normalizer(&self, u: &[f64], t_index: usize) -> Result<f64> {
        let loo = leave_one_out_sums(u);
        let denom = compensated_sum(u.iter().zip(&loo).map(|(a, b)| a * b));
        if denom > 0.0 {
            Ok(denom)
        } else {
            Err(Error::WeightUnderflow(t_index))
        }
    }

    /// Two-replica Gibbs average over distinct replica pairs:
    /// `sum_{j != k} u_j u_k f(w^j, w^k) / sum_{j != k} u_j u_k` with
    /// `u_j = exp(-beta H_t(w^j))`. `f` receives the two replica positions at
    /// grid index `t_index`.
    pub fn gibbs_pair_average<F>(&self, t_index: usize, mut f: F) -> Result<f64>
    where
        F: FnMut(&[f64], &[f64]) -> f64,
    {
        self.check_index(t_index)?;
        let n = self.n_paths();
        if n < 2 {
            return Err(invalid("n_paths", "pair averages need at least 2 replicas"));
        }
        let (u, _) = self.shifted_weights(t_index);
        self.pair_normalizer(&u, t_index)?;
        // same products in the same order on both sides, so f == 1 gives exactly 1
        let mut num = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        for j in 0..n {
            if u[j] == 0.0 {
                continue;
            }
            let xj = self.ensemble.position(j, t_index);
            for k in 0..n {
                if k != j && u[k] != 0.0 {
                    let w = u[j] * u[k];
                    num.add(w * f(xj, self.ensemble.position(k, t_index)));
                    den.add(w);
                }
            }
        }
        Ok(num.value() / den.value())
    }

    /// `<Q(w^1_t - w^2_t)>_t` over distinct pairs. Uses the symmetry of `Q`
    /// to visit each unordered pair once.
    pub fn pair_kernel_average(&self, t_index: usize) -> Result<f64> {
        self.check_index(t_index)?;
        let n = self.n_paths();
        if n < 2 {
            return Err(invalid("n_paths", "pair averages need at least 2 replicas"));
        }
        let kernel = self.environment.kernel();
        let d = self.ensemble.dim;
        let (u, _) = self.shifted_weights(t_index);
        let denom = self.pair_normalizer(&u, t_index)?;
        let pts = self.ensemble.at_step(t_index);
        let coords: Vec<Vec<f64>> = (0..d)
            .map(|c| pts.iter().skip(c).step_by(d).copied().collect())
            .collect();
        let mut q = vec![0.0; n];
        let mut num = CompensatedSum::new();
        for j in 0..n - 1 {
            if u[j] == 0.0 {
                continue;
            }
            let row = &mut q[j + 1..];
            row.fill(0.0);
            for col in &coords {
                let xj = col[j];
                for (r2, xk) in row.iter_mut().zip(&col[j + 1..]) {
                    let diff = xj - xk;
                    *r2 += diff * diff;
                }
            }
            kernel.at_sq_distances(row);
            let weighted: f64 = row.iter().zip(&u[j + 1..]).map(|(qk, uk)| qk * uk).sum();
            num.add(2.0 * u[j] * weighted);
        }
        Ok(num.value() / denom)
    }

    /// Running left-point integrals `sum_{i < n} dt <Q(w^1 - w^2)>_{t_i}` for
    /// `n = 0..=n_steps`. Entry `n` divided by `t_n` is the overlap at `t_n`.
    pub fn overlap_integrals(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_steps() + 1);
        let mut acc = CompensatedSum::new();
        out.push(0.0);
        for i in 0..self.n_steps() {
            acc.add(self.dt() * self.pair_kernel_average(i)?);
            out.push(acc.value());
        }
        Ok(out)
    }

    /// `(1/t) sum_{i < t_index} dt <Q(w^1_{t_i} - w^2_{t_i})>_{t_i}`, with the
    /// Gibbs weights of each time `t_i` inside the sum.
    pub fn overlap_estimate(&self, t_index: usize) -> Result<f64> {
        self.check_index(t_index)?;
        if t_index == 0 {
            return Err(invalid("t_index", "overlap needs t_index >= 1"));
        }
        let mut acc = CompensatedSum::new();
        for i in 0..t_index {
            acc.add(self.dt() * self.pair_kernel_average(i)?);
        }
        Ok(acc.value() / self.time(t_index))
    }

    /// `log` of the pair U-statistic
    /// `(1 / (N (N - 1))) sum_{j != k} exp(-beta (H_j + H_k))`, an unbiased
    /// estimate of `Z_t^2` averaged over path draws.
    pub fn log_pair_product_mean(&self, t_index: usize) -> Result<f64> {
        self.check_index(t_index)?;
        let n = self.n_paths();
        if n < 2 {
            return Err(invalid("n_paths", "pair averages need at least 2 replicas"));
        }
        let (u, peak) = self.shifted_weights(t_index);
        let denom = self.pair_normalizer(&u, t_index)?;
        Ok(2.0 * peak + denom.ln() - ((n * (n - 1)) as f64).ln())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be >= 0, got {beta}")));
    }
    Ok(())
}

/// Environment average of `W^_t^theta` with its standard error.
pub fn fractional_moment(runs: &[PolymerRun], theta: f64, t_index: usize) -> Result<Estimate> {
    if runs.len() < 2 {
        return Err(invalid("runs", "need at least 2 environments"));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(invalid("theta", format!("must lie in (0, 1], got {theta}")));
    }
    let values = runs
        .iter()
        .map(|r| Ok((theta * r.normalized_partition(t_index)?.log).exp()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Estimate::from_samples(&values))
}
