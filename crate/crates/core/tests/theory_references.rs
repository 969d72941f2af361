use std::f64::consts::PI;

use polylab::quadrature::Verdict;
use polylab::theory::{self, DisorderCriterionSpec};
use polylab::CovarianceKernel;

/// Gamma(d / 2) for the dimensions below.
fn half_gamma(d: usize) -> f64 {
    match d {
        1 => PI.sqrt(),
        2 => 1.0,
        3 => PI.sqrt() / 2.0,
        5 => 3.0 * PI.sqrt() / 4.0,
        _ => unreachable!(),
    }
}

/// P(chi_d > z) by composite Simpson on [z, z + 40].
fn chi_survival(z: f64, d: usize) -> f64 {
    let norm = 2f64.powf(d as f64 / 2.0 - 1.0) * half_gamma(d);
    let f = |x: f64| x.powi(d as i32 - 1) * (-x * x / 2.0).exp() / norm;
    let n = 400_000;
    let h = 40.0 / n as f64;
    let mut s = f(z) + f(z + 40.0);
    for i in 1..n {
        let x = z + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

#[test]
fn pair_exit_matches_chi_quadrature() {
    for d in [1, 2, 3, 5] {
        for (s, r) in [(0.5, 1.0), (1.0, 0.3), (2.0, 4.0), (0.1, 1.5)] {
            let got = theory::pair_exit_probability(s, r, d).unwrap();
            // the replica difference is sqrt(2) times a Brownian motion
            let want = chi_survival(r / (2.0 * s).sqrt(), d);
            assert!((got - want).abs() <= 1e-10 * want, "d={d} s={s} r={r}: {got} vs {want}");
        }
    }
}

#[test]
fn criterion_holds_for_every_p_on_the_example() {
    for p in [1.25, 2.0, 4.0] {
        let k = CovarianceKernel::cauchy(1.0, 0.4, 1).unwrap();
        let spec = DisorderCriterionSpec::new(k, 1.0, p, 1.2).unwrap();
        let r = theory::disorder_criterion_h1(&spec).unwrap();
        assert_eq!(r.v.verdict, Verdict::Divergent, "p={p}");
        assert_eq!(r.w.verdict, Verdict::Finite, "p={p}");
        assert!(r.satisfied());
    }
}

#[test]
fn radial_tail_table() {
    let g = CovarianceKernel::gaussian(1.0, 1.0, 3).unwrap();
    let t = g.radial_tail_integral(1.0e3, 1e-12).unwrap();
    assert_eq!(t.verdict, Verdict::Finite);
    assert!((t.value - 1.0).abs() <= 1e-6);
}

#[test]
fn closed_form_constants() {
    assert_eq!(theory::kappa(1.0, 1.0, 2.0).unwrap(), 12.25);
    assert_eq!(theory::kappa(0.0, 1.0, 2.0).unwrap(), 0.0);
    let conc = theory::concentration_bound(1.0, 4.0, 1.0, 1.0).unwrap();
    assert!((conc - 0.73576).abs() < 5e-6);
    assert!((theory::pair_exit_probability(0.5, 1.0, 1).unwrap() - 0.31731).abs() < 5e-6);
}
