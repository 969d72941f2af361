//! Command-line front end: configuration, dispatch and CSV output.

pub mod config;
pub mod csv;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use polylab::experiments::{self, ExperimentConfig, Report};
use polylab::{EnvMode, Error};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERDICT_FAIL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "polylab", version, about = "Directed polymer Monte Carlo laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (`section.key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `run.output`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Environment sampler; overrides `env.mode`.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Suppress the human-readable summary.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    ExactCholesky,
    Spectral,
}

impl From<ModeArg> for EnvMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::ExactCholesky => EnvMode::ExactCholesky,
            ModeArg::Spectral => EnvMode::Spectral,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Environment sampler covariance battery (both modes).
    ValidateSampler,
    /// Pooled mean of exp(-beta H_t) against the annealed mean.
    Annealed,
    /// Environment mean of W_t against 1.
    Martingale,
    /// Free-energy bound, superadditivity and beta convexity/monotonicity.
    FreeEnergy,
    /// Fluctuations of (1/t) log Z_t against the concentration bound.
    Concentration,
    /// Environment-side against replica-side E[Z_t^2].
    SecondMoment,
    /// Weak/strong regime heuristic from log W_t and the overlap.
    Regime,
    /// Fractional moments of W_t against the decay bound.
    Fractional,
    /// Closed-form constants, criterion integrals and the (H) probe.
    Theory,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ValidateSampler => "validate-sampler",
            Command::Annealed => "annealed",
            Command::Martingale => "martingale",
            Command::FreeEnergy => "free-energy",
            Command::Concentration => "concentration",
            Command::SecondMoment => "second-moment",
            Command::Regime => "regime",
            Command::Fractional => "fractional",
            Command::Theory => "theory",
        }
    }
}

pub fn dispatch(command: Command, cfg: &ExperimentConfig) -> polylab::Result<Report> {
    match command {
        Command::ValidateSampler => experiments::run_sampler_validation(cfg),
        Command::Annealed => experiments::run_annealed_check(cfg),
        Command::Martingale => experiments::run_martingale_check(cfg),
        Command::FreeEnergy => experiments::run_free_energy_scan(cfg),
        Command::Concentration => experiments::run_concentration_check(cfg),
        Command::SecondMoment => experiments::run_second_moment_check(cfg),
        Command::Regime => experiments::run_regime_experiment(cfg),
        Command::Fractional => experiments::run_fractional_moment_check(cfg),
        Command::Theory => experiments::run_theory(cfg),
    }
}

/// Errors that stem from the configuration rather than the numerics.
fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameter { .. } | Error::UnsupportedFamily(_) | Error::NotOnGrid(_)
    )
}

pub fn csv_path(out_dir: &Path, cfg: &ExperimentConfig, command: Command) -> PathBuf {
    out_dir.join(format!("{}.{}.csv", cfg.name, command.name()))
}

fn summary(report: &Report, path: &Path) -> String {
    let mut s = String::new();
    for r in &report.records {
        let mut line = format!(
            "{:<12} {} beta={} t={} estimate={:.6e} se={:.3e}",
            r.verdict.as_str(),
            r.experiment,
            r.beta,
            r.t,
            r.estimate,
            r.std_error
        );
        if let Some(b) = r.bound {
            line.push_str(&format!(" bound={b:.6e}"));
        }
        if let Some(t) = r.target {
            line.push_str(&format!(" target={t:.6e}"));
        }
        if r.heuristic {
            line.push_str(" (heuristic)");
        }
        s.push_str(&line);
        s.push('\n');
    }
    for (beta, regime) in &report.regimes {
        s.push_str(&format!("regime beta={beta}: {} (finite-t heuristic)\n", regime.as_str()));
    }
    for n in &report.notes {
        s.push_str(&format!("note: {n}\n"));
    }
    s.push_str(&format!("wrote {}\n", path.display()));
    s
}

/// Runs the program on `args` (including the program name) and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let Some(config_path) = &cli.config else {
        eprintln!("error: --config <path> is required");
        return EXIT_CONFIG;
    };
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config_path.display());
            return EXIT_CONFIG;
        }
    };
    let mut cfg = match config::parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", config_path.display());
            return EXIT_CONFIG;
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = cli.mode {
        cfg.mode = mode.into();
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let report = match dispatch(cli.command, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return if is_config_error(&e) { EXIT_CONFIG } else { EXIT_NUMERICAL };
        }
    };
    let path = csv_path(&out_dir, &cfg, cli.command);
    if let Err(e) = csv::emit_csv(&report.records, &path) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return EXIT_NUMERICAL;
    }
    if !cli.quiet {
        print!("{}", summary(&report, &path));
    }
    if report.failed() {
        EXIT_VERDICT_FAIL
    } else {
        EXIT_OK
    }
}
