use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polylab::experiments::{Expectation, KernelChoice};
use polylab::EnvMode;
use polylab_cli::config::parse_config;
use polylab_cli::csv::HEADER;
use tempfile::TempDir;

fn polylab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polylab")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = "experiment.name = small\nkernel.family = gaussian\nrun.betas = 0, 0.5\n\
                     env.n_steps = 20\nrun.n_paths = 8\nrun.n_envs = 6\nenv.k_features = 32\nrun.checkpoints = 0.1, 0.2\n";

fn run_small(sub: &str, cfg_text: &str, extra: &[&str]) -> (TempDir, Output) {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "c.cfg", cfg_text);
    let out = dir.path().join("out");
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = polylab(&args);
    (dir, o)
}

#[test]
fn shipped_example_parses_to_documented_values() {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/weak_d3.cfg")).unwrap();
    let cfg = parse_config(&text).unwrap();
    assert_eq!(cfg.name, "weak_d3");
    assert_eq!(cfg.kernel.family, KernelChoice::Gaussian);
    assert_eq!((cfg.kernel.sigma2, cfg.kernel.length_scale, cfg.dim), (1.0, 1.0, 3));
    assert_eq!(cfg.mode, EnvMode::Spectral);
    assert_eq!((cfg.k_features, cfg.dt, cfg.n_steps), (512, 0.01, 800));
    assert_eq!((cfg.seed, cfg.n_paths, cfg.n_envs), (1, 128, 100));
    assert_eq!(cfg.betas, vec![0.3]);
    assert_eq!(cfg.checkpoints, vec![1.0, 2.0, 4.0, 8.0]);
    assert_eq!((cfg.p, cfg.alpha, cfg.theta), (2.0, 1.2, 0.5));
    assert_eq!(cfg.c_values, vec![0.05, 0.1, 0.2, 0.4]);
    assert_eq!(cfg.expect, Some(Expectation::Weak));

    // every key but the two required ones is at its default
    let minimal = parse_config(
        "kernel.family = gaussian\nexperiment.name = weak_d3\nkernel.dim = 3\nrun.n_paths = 128\n\
         run.n_envs = 100\nrun.betas = 0.3\nrun.output = out\nexperiment.expect = weak\n",
    )
    .unwrap();
    assert_eq!(minimal, cfg);
}

#[test]
fn annealed_at_beta_zero_exits_zero() {
    let (dir, o) = run_small("annealed", &SMALL.replace("0, 0.5", "0"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/small.annealed.csv")).unwrap();
    assert!(csv.starts_with(HEADER));
    assert!(csv.contains("annealed,0.0000000000000000e0,2.0000000000000001e-1,1.0000000000000000e0,0.0000000000000000e0,,1.0000000000000000e0,pass"));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, oa) = run_small("martingale", SMALL, &["--quiet"]);
    let (b, ob) = run_small("martingale", SMALL, &["--quiet"]);
    assert_eq!(oa.status.code(), ob.status.code());
    assert!(oa.stdout.is_empty());
    let x = fs::read(a.path().join("out/small.martingale.csv")).unwrap();
    let y = fs::read(b.path().join("out/small.martingale.csv")).unwrap();
    assert_eq!(x, y);

    let (c, _) = run_small("martingale", SMALL, &["--quiet", "--seed", "99"]);
    let z = fs::read(c.path().join("out/small.martingale.csv")).unwrap();
    assert_ne!(x, z);
}

#[test]
fn unknown_key_is_a_config_error() {
    let (_d, o) = run_small("annealed", &format!("{SMALL}kernel.scale = 2\n"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("kernel.scale"), "{err}");
    assert!(err.contains(":9:"), "{err}");
}

#[test]
fn config_errors_exit_one() {
    assert_eq!(polylab(&["annealed"]).status.code(), Some(1));
    assert_eq!(polylab(&["annealed", "--config", "/nonexistent/x.cfg"]).status.code(), Some(1));
    assert_eq!(polylab(&["bogus"]).status.code(), Some(1));
    assert_eq!(polylab(&["--help"]).status.code(), Some(0));
    let (_d, o) = run_small("annealed", &SMALL.replace("0.1, 0.2", "0.1, 0.5"), &[]);
    assert_eq!(o.status.code(), Some(1));
    let (_d, o) = run_small("annealed", &SMALL.replace("experiment.name = small", "experiment.name ="), &[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn failing_verdict_exits_three() {
    // a weak-disorder expectation cannot hold for a strong cauchy run with
    // a vanishing slope tolerance
    let text = "experiment.name = f\nkernel.family = cauchy\nrun.betas = 2\nenv.n_steps = 40\nrun.n_paths = 8\n\
                run.n_envs = 6\nenv.k_features = 32\nrun.checkpoints = 0.1, 0.2, 0.4\nexperiment.slope_epsilon = 1e-9\n\
                experiment.n_bootstrap = 20\nexperiment.expect = weak\n";
    let (dir, o) = run_small("regime", text, &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(dir.path().join("out/f.regime.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("regime.verdict.") && l.contains(",fail,true,")));
}

#[test]
fn theory_prints_kappa() {
    let text = "experiment.name = th\nkernel.family = gaussian\nrun.betas = 1\nexperiment.p = 2\nrun.checkpoints = 1, 2\n\
                experiment.n_samples = 1000\n";
    let (dir, o) = run_small("theory", text, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("theory.kappa beta=1 t=0 estimate=1.225000e1"), "{stdout}");
    let csv = fs::read_to_string(dir.path().join("out/th.theory.csv")).unwrap();
    assert!(csv.contains("theory.kappa,1.0000000000000000e0,0.0000000000000000e0,1.2250000000000000e1,"));
}

#[test]
fn mode_override_switches_sampler() {
    let text = SMALL.replace("0, 0.5", "0.5");
    let (a, _) = run_small("annealed", &text, &["--quiet"]);
    let (b, o) = run_small("annealed", &text, &["--quiet", "--mode", "exact-cholesky"]);
    assert_eq!(o.status.code().map(|c| c == 0 || c == 3), Some(true));
    let x = fs::read(a.path().join("out/small.annealed.csv")).unwrap();
    let y = fs::read(b.path().join("out/small.annealed.csv")).unwrap();
    assert_ne!(x, y);
}
