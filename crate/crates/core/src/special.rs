//! Regularized incomplete gamma function in log form.

use statrs::function::gamma::ln_gamma;

const MAX_ITER: usize = 500;
const EPS: f64 = 1.0e-16;
const TINY: f64 = 1.0e-300;

/// `ln Q(a, x)` where `Q(a, x) = Gamma(a, x) / Gamma(a)` is the regularized
/// upper incomplete gamma function. Stays finite far beyond the point where
/// `Q` itself underflows.
pub fn ln_gamma_q(a: f64, x: f64) -> f64 {
    assert!(a > 0.0, "shape must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    let ln_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let p = ln_prefactor.exp() * lower_series(a, x);
        (-p).ln_1p()
    } else {
        ln_prefactor + upper_continued_fraction(a, x).ln()
    }
}

/// `Q(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    ln_gamma_q(a, x).exp()
}

/// `sum_n x^n / (a (a+1) ... (a+n))`, so that
/// `P(a, x) = x^a e^-x / Gamma(a) * series`.
fn lower_series(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum
}

/// Modified Lentz evaluation of the continued fraction for
/// `Gamma(a, x) e^x x^-a`.
fn upper_continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Survival function of the chi-square distribution with `dof` degrees of
/// freedom, in log form.
pub fn ln_chi_square_survival(z: f64, dof: usize) -> f64 {
    ln_gamma_q(0.5 * dof as f64, 0.5 * z)
}
