//! End-to-end acceptance suite: criteria 1-9 at full scale, then criterion 10
//! reruns them under a different thread count and compares the CSV bytes.
//!
//! Runs without the libtest harness so the per-criterion lines always print.

use std::time::{Duration, Instant};

use polylab::experiments::{self, ExperimentConfig, Outcome, Regime, Report, SummaryRecord};
use polylab::quadrature::Verdict;
use polylab::stats::Estimate;
use polylab::theory::{self, DisorderCriterionSpec};
use polylab::CovarianceKernel;
use polylab_cli::config::parse_config;
use polylab_cli::csv;

struct Check {
    pass: bool,
    detail: String,
    csv: Vec<String>,
}

struct Criterion {
    id: u32,
    title: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

/// Parses `text`, defaulting to the gaussian family.
fn config(text: &str) -> ExperimentConfig {
    let text = if text.contains("kernel.family") {
        text.to_string()
    } else {
        format!("kernel.family = gaussian\n{text}")
    };
    parse_config(&text).unwrap_or_else(|e| panic!("bad acceptance config: {e}"))
}

fn rows<'a>(r: &'a Report, name: &'a str) -> impl Iterator<Item = &'a SummaryRecord> + 'a {
    r.records.iter().filter(move |x| x.experiment == name)
}

/// All rows named `name` pass and there are exactly `count` of them.
fn all_pass(r: &Report, name: &str, count: usize, why: &mut Vec<String>) -> bool {
    let found: Vec<_> = rows(r, name).collect();
    let ok = found.len() == count && found.iter().all(|x| x.verdict == Outcome::Pass);
    if !ok {
        for x in found.iter().filter(|x| x.verdict != Outcome::Pass) {
            why.push(format!("{} beta={} t={} est={:.5} se={:.2e} {}", x.experiment, x.beta, x.t, x.estimate, x.std_error, x.verdict));
        }
        if found.len() != count {
            why.push(format!("{name}: {} rows, expected {count}", found.len()));
        }
    }
    ok
}

/// `estimate±se` of every row named `name`.
fn summarize(r: &Report, name: &str) -> String {
    rows(r, name)
        .map(|x| format!("{:.4}±{:.4}", x.estimate, x.std_error))
        .collect::<Vec<_>>()
        .join(" ")
}

fn summarize_at(r: &Report, name: &str, t: f64) -> String {
    rows(r, name)
        .filter(|x| x.t == t)
        .map(|x| format!("{:.4}±{:.4}", x.estimate, x.std_error))
        .collect::<Vec<_>>()
        .join(" ")
}

fn finish(pass: bool, mut detail: Vec<String>, reports: &[&Report]) -> Check {
    for r in reports {
        if r.failed() {
            detail.push("a graded row failed".into());
        }
    }
    let pass = pass && reports.iter().all(|r| !r.failed());
    Check {
        pass,
        detail: detail.join("; "),
        csv: reports.iter().map(|r| csv::render(&r.records)).collect(),
    }
}

fn annealed() -> Check {
    let spectral = experiments::run_annealed_check(&config(
        "experiment.name = annealed\nrun.betas = 0.5\nenv.n_steps = 100\nrun.checkpoints = 1\n",
    ))
    .unwrap();
    let exact = experiments::run_annealed_check(&config(
        "experiment.name = annealed-exact\nrun.betas = 0.5\nenv.n_steps = 100\nrun.checkpoints = 1\n\
         env.mode = exact-cholesky\nrun.n_paths = 8\nrun.n_envs = 2000\n",
    ))
    .unwrap();
    let mut why = Vec::new();
    let mut ok = all_pass(&spectral, "annealed", 1, &mut why);
    ok &= all_pass(&exact, "annealed", 1, &mut why);
    for r in [&spectral, &exact] {
        let x = rows(r, "annealed").next().unwrap();
        ok &= (x.target.unwrap() - 1.13315).abs() < 5e-6;
        why.push(format!("{:.4}±{:.4}", x.estimate, x.std_error));
    }
    finish(ok, why, &[&spectral, &exact])
}

fn sampler() -> Check {
    let r = experiments::run_sampler_validation(&config("experiment.name = sampler\n")).unwrap();
    let mut why = Vec::new();
    let mut ok = true;
    for mode in ["exact-cholesky", "spectral"] {
        let n = r
            .records
            .iter()
            .filter(|x| x.experiment.starts_with(&format!("sampler.covariance.{mode}.")))
            .inspect(|x| {
                if x.verdict != Outcome::Pass {
                    why.push(format!("{} {}", x.experiment, x.verdict));
                }
            })
            .filter(|x| x.verdict == Outcome::Pass)
            .count();
        ok &= n == 15;
    }
    ok &= all_pass(&r, "sampler.k-doubling", 1, &mut why);
    let ratio = rows(&r, "sampler.k-doubling").next().map(|x| x.estimate).unwrap_or(f64::NAN);
    ok &= (1.2..=1.7).contains(&ratio);
    why.push(format!("k-doubling ratio {ratio:.3}"));
    finish(ok, why, &[&r])
}

fn martingale(text: &str) -> Check {
    let r = experiments::run_martingale_check(&config(text)).unwrap();
    let mut why = Vec::new();
    let ok = all_pass(&r, "martingale.mean", 3, &mut why);
    why.push(summarize(&r, "martingale.mean"));
    finish(ok, why, &[&r])
}

fn martingale_default() -> Check {
    martingale("experiment.name = martingale\nrun.betas = 0.5\nenv.n_steps = 400\nrun.checkpoints = 1, 2, 4\n")
}

fn martingale_weak() -> Check {
    martingale(
        "experiment.name = martingale-weak\nkernel.dim = 3\nrun.betas = 0.3\nenv.n_steps = 400\n\
         run.n_paths = 128\nrun.n_envs = 100\nrun.checkpoints = 1, 2, 4\n",
    )
}

fn free_energy() -> Check {
    let r = experiments::run_free_energy_scan(&config(
        "experiment.name = free-energy\nrun.betas = 0, 0.25, 0.5, 0.75, 1\nenv.n_steps = 400\nrun.checkpoints = 2, 4\n",
    ))
    .unwrap();
    let mut why = Vec::new();
    let mut ok = all_pass(&r, "free-energy.bound", 10, &mut why);
    ok &= all_pass(&r, "free-energy.superadditivity-defect", 5, &mut why);
    ok &= all_pass(&r, "free-energy.monotonicity-defect", 8, &mut why);
    ok &= all_pass(&r, "free-energy.convexity-defect", 6, &mut why);
    why.push(format!("bound rows at t=4: {}", summarize_at(&r, "free-energy.bound", 4.0)));
    let zero = r
        .records
        .iter()
        .filter(|x| x.beta == 0.0)
        .all(|x| x.estimate == 0.0 && x.std_error == 0.0);
    if !zero {
        why.push("beta=0 rows not exactly zero".into());
    }
    finish(ok && zero, why, &[&r])
}

fn concentration() -> Check {
    let r = experiments::run_concentration_check(&config(
        "experiment.name = concentration\nrun.betas = 0.5\nenv.n_steps = 400\nrun.n_envs = 500\nrun.checkpoints = 4\n",
    ))
    .unwrap();
    let mut why = Vec::new();
    let mut ok = true;
    for c in ["0.05", "0.1", "0.2", "0.4"] {
        let name = format!("concentration.c={c}");
        ok &= all_pass(&r, &name, 1, &mut why);
        why.push(format!("c={c} {}", summarize(&r, &name)));
    }
    finish(ok, why, &[&r])
}

fn second_moment() -> Check {
    let r = experiments::run_second_moment_check(&config(
        "experiment.name = second-moment\nrun.betas = 0.5\nenv.n_steps = 100\nrun.checkpoints = 1\n",
    ))
    .unwrap();
    let mut why = Vec::new();
    let ok = all_pass(&r, "second-moment", 1, &mut why);
    for x in rows(&r, "second-moment") {
        why.push(format!("environment side {:.4}±{:.4} vs replica side {:.4}", x.estimate, x.std_error, x.target.unwrap_or(f64::NAN)));
    }
    finish(ok, why, &[&r])
}

const STRONG: &str = "kernel.family = cauchy\nkernel.lambda = 0.4\nrun.betas = 1\nexperiment.p = 2\n\
                      experiment.alpha = 1.2\nexperiment.expect = strong\n";

fn strong() -> Check {
    let mut why = Vec::new();

    let kernel = CovarianceKernel::cauchy(1.0, 0.4, 1).unwrap();
    let spec = DisorderCriterionSpec::new(kernel, 1.0, 2.0, 1.2).unwrap();
    let h1 = theory::disorder_criterion_h1(&spec).unwrap();
    let a = h1.v.verdict == Verdict::Divergent && h1.w.verdict == Verdict::Finite;
    why.push(format!("(a) v {} w {}", h1.v.verdict.as_str(), h1.w.verdict.as_str()));

    let frac = experiments::run_fractional_moment_check(&config(&format!(
        "{STRONG}experiment.name = strong-fractional\nenv.n_steps = 400\nrun.checkpoints = 1, 2, 4\n"
    )))
    .unwrap();
    let mut b = all_pass(&frac, "fractional", 3, &mut why);
    b &= all_pass(&frac, "fractional.decrease", 2, &mut why);
    let means: Vec<String> = rows(&frac, "fractional").map(|x| format!("{:.3}", x.estimate)).collect();
    why.push(format!("(b) E[W^1/2] {}", means.join(" > ")));

    let regime = experiments::run_regime_experiment(&config(&format!(
        "{STRONG}experiment.name = strong-regime\nenv.n_steps = 800\nrun.checkpoints = 1, 2, 3, 4, 5, 6, 7, 8\n"
    )))
    .unwrap();
    let c = regime.regimes == [(1.0, Regime::StrongConsistent)];
    why.push(format!("(c) {:?}", regime.regimes.iter().map(|x| x.1.as_str()).collect::<Vec<_>>()));

    finish(a && b && c, why, &[&frac, &regime])
}

const WEAK: &str = "kernel.dim = 3\nrun.betas = 0.3\nrun.n_paths = 128\nrun.n_envs = 100\nexperiment.expect = weak\n";

fn weak() -> Check {
    let mut why = Vec::new();

    let kernel = CovarianceKernel::gaussian(1.0, 1.0, 3).unwrap();
    let tail = kernel.radial_tail_integral(1.0e3, 1e-12).unwrap();
    let a = tail.verdict == Verdict::Finite && (tail.value - 1.0).abs() <= 1e-6;
    why.push(format!("(a) tail {} {:.9}", tail.verdict.as_str(), tail.value));

    let th = experiments::run_theory(&config(&format!(
        "{WEAK}experiment.name = weak-theory\nenv.n_steps = 800\nrun.checkpoints = 1, 2, 4, 8\nexperiment.n_samples = 10000\n"
    )))
    .unwrap();
    let b = all_pass(&th, "theory.h-probe.saturation", 1, &mut why);
    let sat = rows(&th, "theory.h-probe.saturation").next().map(|x| x.estimate).unwrap_or(f64::NAN);
    why.push(format!("(b) saturation {:.2}%", 100.0 * sat));

    let regime = experiments::run_regime_experiment(&config(&format!(
        "{WEAK}experiment.name = weak-regime\nenv.n_steps = 800\nrun.checkpoints = 1, 2, 3, 4, 5, 6, 7, 8\n"
    )))
    .unwrap();
    let c = regime.regimes == [(0.3, Regime::WeakConsistent)];
    why.push(format!("(c) {:?}", regime.regimes.iter().map(|x| x.1.as_str()).collect::<Vec<_>>()));

    finish(a && b && c, why, &[&th, &regime])
}

fn closed_forms() -> Check {
    let mut why = Vec::new();
    let kappa = theory::kappa(1.0, 1.0, 2.0).unwrap();
    let exit = theory::pair_exit_probability(0.5, 1.0, 1).unwrap();
    let conc = theory::concentration_bound(1.0, 4.0, 1.0, 1.0).unwrap();
    let mut ok = kappa == 12.25;
    ok &= format!("{exit:.5}") == "0.31731";
    ok &= format!("{conc:.5}") == "0.73576";
    why.push(format!("kappa {kappa} exit {exit:.5} conc {conc:.5}"));

    let cfg = config("experiment.name = overlap\nrun.betas = 0\nenv.n_steps = 400\nrun.n_paths = 64\nrun.n_envs = 16\nrun.checkpoints = 4\n");
    let kernel = cfg.build_kernel().unwrap();
    let overlaps: Vec<f64> = (0..cfg.n_envs)
        .map(|e| experiments::simulate_environment(&cfg, &kernel, e).unwrap().overlap_estimate(400).unwrap())
        .collect();
    let est = Estimate::from_samples(&overlaps);
    let overlap_ok = (est.mean - 0.5).abs() <= experiments::GATE * est.std_error;
    why.push(format!("overlap {:.4}±{:.4}", est.mean, est.std_error));

    let line = format!("{kappa:e},{exit:e},{conc:e},{:e},{:e}\n", est.mean, est.std_error);
    Check { pass: ok && overlap_ok, detail: why.join("; "), csv: vec![line] }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn main() {
    let criteria = [
        Criterion { id: 1, title: "annealed mean", limit: Duration::from_secs(60), run: annealed },
        Criterion { id: 2, title: "sampler oracle", limit: Duration::from_secs(120), run: sampler },
        Criterion { id: 3, title: "martingale (default)", limit: Duration::from_secs(180), run: martingale_default },
        Criterion { id: 3, title: "martingale (weak d=3)", limit: Duration::from_secs(180), run: martingale_weak },
        Criterion { id: 4, title: "free-energy bound and structure", limit: Duration::from_secs(300), run: free_energy },
        Criterion { id: 5, title: "concentration", limit: Duration::from_secs(300), run: concentration },
        Criterion { id: 6, title: "second-moment identity", limit: Duration::from_secs(120), run: second_moment },
        Criterion { id: 7, title: "strong-disorder battery", limit: Duration::from_secs(600), run: strong },
        Criterion { id: 8, title: "weak-disorder battery", limit: Duration::from_secs(600), run: weak },
        Criterion { id: 9, title: "closed-form evaluators", limit: Duration::from_secs(10), run: closed_forms },
    ];

    let mut failures = 0;
    let mut first = Vec::new();
    let single = pool(1);
    for c in &criteria {
        let start = Instant::now();
        let out = single.install(c.run);
        let took = start.elapsed();
        let in_time = took <= c.limit;
        let pass = out.pass && in_time;
        failures += usize::from(!pass);
        println!(
            "{} criterion {} {}: {} [{:.1}s{}]",
            if pass { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            out.detail,
            took.as_secs_f64(),
            if in_time { String::new() } else { format!(" > limit {}s", c.limit.as_secs()) }
        );
        first.push(out.csv);
    }

    let threads = 4;
    let multi = pool(threads);
    let mut mismatched = Vec::new();
    for (c, before) in criteria.iter().zip(&first) {
        let again = multi.install(c.run);
        if &again.csv != before {
            mismatched.push(c.id.to_string());
        }
    }
    let pass = mismatched.is_empty();
    failures += usize::from(!pass);
    println!(
        "{} criterion 10 determinism: 1 vs {threads} threads {}",
        if pass { "PASS" } else { "FAIL" },
        if pass { "byte-identical CSV".to_string() } else { format!("differ for criteria {}", mismatched.join(", ")) }
    );

    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
