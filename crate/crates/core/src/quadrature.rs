//! Adaptive Gauss-Kronrod quadrature and tail diagnostics for improper
//! integrals.

use crate::error::{Error, Result};
use crate::stats::linear_fit;

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

pub const MAX_SUBDIVISIONS: usize = 2000;

/// Tail exponent margin used for convergence verdicts.
pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Finite,
    Divergent,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Finite => "finite",
            Verdict::Divergent => "divergent",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    /// Classify a fitted power-law exponent of an integrand tail.
    pub fn from_exponent(exponent: f64, margin: f64) -> Self {
        if exponent < -1.0 - margin {
            Verdict::Finite
        } else if exponent > -1.0 + margin {
            Verdict::Divergent
        } else {
            Verdict::Inconclusive
        }
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    (value, error)
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]` to
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Quadrature> {
    integrate_partitioned(f, &[a, b], rel_tol, abs_tol)
}

/// Like [`integrate`], starting from the partition `edges` instead of a
/// single interval. A fine starting partition keeps narrow peaks from being
/// missed by the first 15-point rule.
pub fn integrate_partitioned<F: FnMut(f64) -> f64>(
    mut f: F,
    edges: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<Quadrature> {
    let (a, b) = (edges[0], edges[edges.len() - 1]);
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let mut intervals: Vec<(f64, f64, f64, f64)> = edges
        .windows(2)
        .map(|w| {
            let (v, e) = gk15(&mut f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    let mut total: f64 = intervals.iter().map(|iv| iv.2).sum();
    let mut total_err: f64 = intervals.iter().map(|iv| iv.3).sum();
    for _ in 0..MAX_SUBDIVISIONS {
        if !total.is_finite() {
            break;
        }
        if total_err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Quadrature {
                value: intervals.iter().map(|iv| iv.2).sum(),
                error: total_err,
            });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, v0, e0) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        total += v1 + v2 - v0;
        total_err += e1 + e2 - e0;
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
    Err(Error::QuadratureFailed { a, b, error: total_err })
}

/// Panel boundaries `0, 1, 10, 100, ...` up to `upper` (or just `[0, upper]`
/// when `upper <= 1`), so that slowly decaying integrands over long ranges
/// are resolved decade by decade.
pub fn decade_panels(upper: f64) -> Vec<f64> {
    let mut edges = vec![0.0];
    let mut edge = 1.0;
    while edge < upper {
        edges.push(edge);
        edge *= 10.0;
    }
    edges.push(upper);
    edges
}

/// Probe cells per decade panel in [`integrate_log`].
const PANEL_CELLS: usize = 1024;
/// Cells whose log-integrand stays this far below the global peak are
/// dropped; their relative contribution is below `e^-80`.
const NEGLIGIBLE_LOG: f64 = 80.0;
/// Leaf cells are bisected until the log-integrand varies by less than this.
const LEAF_LOG_RANGE: f64 = 30.0;
const MAX_DEPTH: usize = 64;

/// `log int_0^upper exp(log_f(s)) ds` for integrands far outside the
/// floating-point range.
///
/// The range is split into decade panels, each probed on a grid of
/// [`PANEL_CELLS`] cells. Cells far below the global peak are discarded,
/// steep cells are bisected, and each surviving leaf is integrated with the
/// adaptive rule after rescaling by its own maximum.
pub fn integrate_log<F: Fn(f64) -> f64>(log_f: F, upper: f64, rel_tol: f64) -> Result<f64> {
    let edges = decade_panels(upper);
    let mut grid = Vec::with_capacity((edges.len() - 1) * PANEL_CELLS + 1);
    for w in edges.windows(2) {
        for i in 0..PANEL_CELLS {
            grid.push(w[0] + (w[1] - w[0]) * i as f64 / PANEL_CELLS as f64);
        }
    }
    grid.push(upper);
    let values: Vec<f64> = grid.iter().map(|&s| log_f(s)).collect();
    if values.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::QuadratureFailed { a: 0.0, b: upper, error: f64::NAN });
    }
    let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let mut pieces = Vec::new();
    for i in 0..grid.len() - 1 {
        log_cell(&log_f, grid[i], grid[i + 1], values[i], values[i + 1], peak, rel_tol, 0, &mut pieces)?;
    }
    Ok(crate::stats::log_sum_exp(&pieces))
}

#[allow(clippy::too_many_arguments)]
fn log_cell<F: Fn(f64) -> f64>(
    log_f: &F,
    a: f64,
    b: f64,
    la: f64,
    lb: f64,
    peak: f64,
    rel_tol: f64,
    depth: usize,
    pieces: &mut Vec<f64>,
) -> Result<()> {
    let mid = 0.5 * (a + b);
    let lm = log_f(mid);
    let hi = la.max(lb).max(lm);
    let lo = la.min(lb).min(lm);
    if hi < peak - NEGLIGIBLE_LOG {
        return Ok(());
    }
    if hi - lo > LEAF_LOG_RANGE && depth < MAX_DEPTH {
        log_cell(log_f, a, mid, la, lm, peak, rel_tol, depth + 1, pieces)?;
        return log_cell(log_f, mid, b, lm, lb, peak, rel_tol, depth + 1, pieces);
    }
    let q = integrate(|s| (log_f(s) - hi).exp(), a, b, rel_tol, 0.0)?;
    if q.value > 0.0 {
        pieces.push(hi + q.value.ln());
    }
    Ok(())
}

/// Least-squares power-law exponent of `exp(log_f)` over the last decade
/// `[upper / 10, upper]`.
pub fn tail_exponent<F: Fn(f64) -> f64>(log_f: F, upper: f64) -> f64 {
    const POINTS: usize = 41;
    let lo = (upper / 10.0).ln();
    let hi = upper.ln();
    let mut xs = Vec::with_capacity(POINTS);
    let mut ys = Vec::with_capacity(POINTS);
    for i in 0..POINTS {
        let ln_s = lo + (hi - lo) * i as f64 / (POINTS - 1) as f64;
        let y = log_f(ln_s.exp());
        if y.is_finite() {
            xs.push(ln_s);
            ys.push(y);
        } else if y == f64::NEG_INFINITY {
            // Underflowed integrand: the tail is below every power law.
            return f64::NEG_INFINITY;
        }
    }
    if xs.len() < 2 {
        return f64::NAN;
    }
    linear_fit(&xs, &ys).0
}

/// Integral over `[0, upper]` together with a tail verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImproperIntegral {
    /// `log` of the integral over `[0, upper]`.
    pub log_value: f64,
    pub tail_exponent: f64,
    pub verdict: Verdict,
}

impl ImproperIntegral {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

pub fn improper_integral<F: Fn(f64) -> f64>(
    log_f: F,
    upper: f64,
    rel_tol: f64,
    margin: f64,
) -> Result<ImproperIntegral> {
    let log_value = integrate_log(&log_f, upper, rel_tol)?;
    let tail_exponent = tail_exponent(&log_f, upper);
    let verdict = if tail_exponent.is_nan() {
        Verdict::Inconclusive
    } else {
        Verdict::from_exponent(tail_exponent, margin)
    };
    Ok(ImproperIntegral {
        log_value,
        tail_exponent,
        verdict,
    })
}
