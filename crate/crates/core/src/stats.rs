//! Summation, log-sum-exp and small-sample statistics.

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// `log sum_j exp(x_j)`, shifted by the maximum. Returns `-inf` for an empty
/// slice or when every entry is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let peak = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return peak;
    }
    let s = compensated_sum(xs.iter().map(|x| (x - peak).exp()));
    peak + s.ln()
}

/// `log((1/n) sum_j exp(x_j))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Mean with its standard error (sample standard deviation over sqrt(n)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = compensated_sum(xs.iter().copied()) / n as f64;
        let std_error = if n < 2 {
            0.0
        } else {
            let ss = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
            (ss / (n as f64 - 1.0) / n as f64).sqrt()
        };
        Self { mean, std_error, n }
    }

    pub fn variance(&self) -> f64 {
        self.std_error * self.std_error * self.n as f64
    }

    /// |mean - target| <= k * se.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.std_error
    }
}

/// Standard error of the difference of two independent estimates.
pub fn combined_se(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = compensated_sum(x.iter().copied()) / n;
    let my = compensated_sum(y.iter().copied()) / n;
    let sxy = compensated_sum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = compensated_sum(x.iter().map(|a| (a - mx) * (a - mx)));
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Jackknife bias-corrected `log((1/n) sum_j exp(x_j))` over the entries.
///
/// Returns `(plug_in, corrected)`. The leave-one-out values are computed from
/// a single shifted sum, so the whole estimate is O(n).
pub fn jackknife_log_mean_exp(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let plug_in = log_mean_exp(xs);
    if n < 2 {
        return (plug_in, plug_in);
    }
    let peak = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = xs.iter().map(|x| (x - peak).exp()).collect();
    // Leave-one-out sums from prefix and suffix partials avoid the
    // cancellation of `total - w[j]` when one weight dominates.
    let mut prefix = vec![0.0; n + 1];
    for j in 0..n {
        prefix[j + 1] = prefix[j] + w[j];
    }
    let mut suffix = vec![0.0; n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] + w[j];
    }
    let ln_m = ((n - 1) as f64).ln();
    let loo = compensated_sum((0..n).map(|j| peak + (prefix[j] + suffix[j + 1]).ln() - ln_m));
    let loo_mean = loo / n as f64;
    (plug_in, n as f64 * plug_in - (n as f64 - 1.0) * loo_mean)
}

/// Leave-one-out sums `sum_{k != j} w_k` without subtractive cancellation.
pub fn leave_one_out_sums(w: &[f64]) -> Vec<f64> {
    let n = w.len();
    let mut prefix = vec![0.0; n + 1];
    for j in 0..n {
        prefix[j + 1] = prefix[j] + w[j];
    }
    let mut out = vec![0.0; n];
    let mut suffix = 0.0;
    for j in (0..n).rev() {
        out[j] = prefix[j] + suffix;
        suffix += w[j];
    }
    out
}
