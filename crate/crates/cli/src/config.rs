//! `section.key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment; blank lines are ignored.
//! Lists are comma separated. Every key except `kernel.family` and
//! `experiment.name` has a default (see [`ExperimentConfig::new`]); unknown
//! and repeated keys are errors.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use polylab::experiments::{Expectation, ExperimentConfig, KernelChoice};
use polylab::EnvMode;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config:{}:{}: {}", self.line, self.column, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

pub const KEYS: &[&str] = &[
    "kernel.family",
    "kernel.sigma2",
    "kernel.length_scale",
    "kernel.lambda",
    "kernel.dim",
    "env.mode",
    "env.k_features",
    "env.dt",
    "env.n_steps",
    "run.seed",
    "run.n_paths",
    "run.n_envs",
    "run.betas",
    "run.checkpoints",
    "run.output",
    "experiment.name",
    "experiment.slope_epsilon",
    "experiment.p",
    "experiment.alpha",
    "experiment.theta",
    "experiment.c_values",
    "experiment.n_samples",
    "experiment.n_bootstrap",
    "experiment.sampler_draws",
    "experiment.sampler_seeds",
    "experiment.expect",
];

struct Entry {
    value: String,
    line: usize,
    column: usize,
}

impl Entry {
    fn error(&self, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    fn scalar<T: FromStr>(&self, key: &str, what: &str) -> Result<T, ConfigError> {
        self.value
            .parse()
            .map_err(|_| self.error(format!("{key}: expected {what}, got `{}`", self.value)))
    }

    fn list<T: FromStr>(&self, key: &str, what: &str) -> Result<Vec<T>, ConfigError> {
        self.value
            .split(',')
            .map(|item| {
                item.trim()
                    .parse()
                    .map_err(|_| self.error(format!("{key}: expected a list of {what}, got `{}`", item.trim())))
            })
            .collect()
    }
}

fn lex(text: &str) -> Result<HashMap<String, Entry>, ConfigError> {
    let mut entries: HashMap<String, Entry> = HashMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        if content.trim().is_empty() {
            continue;
        }
        let key_col = content.len() - content.trim_start().len() + 1;
        let Some(eq) = content.find('=') else {
            return Err(ConfigError {
                line,
                column: key_col,
                message: "expected `section.key = value`".into(),
            });
        };
        let key = content[..eq].trim();
        let after = &content[eq + 1..];
        let value = after.trim();
        let value_col = eq + 2 + (after.len() - after.trim_start().len());
        if !KEYS.contains(&key) {
            return Err(ConfigError {
                line,
                column: key_col,
                message: format!("unknown key `{key}`"),
            });
        }
        if value.is_empty() {
            return Err(ConfigError {
                line,
                column: value_col,
                message: format!("{key}: missing value"),
            });
        }
        if let Some(prev) = entries.get(key) {
            return Err(ConfigError {
                line,
                column: key_col,
                message: format!("{key}: repeated (first set on line {})", prev.line),
            });
        }
        entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
                column: value_col,
            },
        );
    }
    Ok(entries)
}

fn missing(key: &str) -> ConfigError {
    ConfigError {
        line: 0,
        column: 0,
        message: format!("missing required key `{key}`"),
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let e = lex(text)?;
    let family_entry = e.get("kernel.family").ok_or_else(|| missing("kernel.family"))?;
    let family = KernelChoice::parse(&family_entry.value).ok_or_else(|| {
        family_entry.error(format!(
            "kernel.family: expected gaussian or cauchy, got `{}`",
            family_entry.value
        ))
    })?;
    let name_entry = e.get("experiment.name").ok_or_else(|| missing("experiment.name"))?;
    let mut cfg = ExperimentConfig::new(&name_entry.value, family);

    macro_rules! scalar {
        ($key:literal, $field:expr, $what:literal) => {
            if let Some(v) = e.get($key) {
                $field = v.scalar($key, $what)?;
            }
        };
    }
    macro_rules! list {
        ($key:literal, $field:expr, $what:literal) => {
            if let Some(v) = e.get($key) {
                $field = v.list($key, $what)?;
            }
        };
    }
    scalar!("kernel.sigma2", cfg.kernel.sigma2, "a real");
    scalar!("kernel.length_scale", cfg.kernel.length_scale, "a real");
    scalar!("kernel.lambda", cfg.kernel.lambda, "a real");
    scalar!("kernel.dim", cfg.dim, "a positive integer");
    scalar!("env.k_features", cfg.k_features, "a positive integer");
    scalar!("env.dt", cfg.dt, "a real");
    scalar!("env.n_steps", cfg.n_steps, "a positive integer");
    scalar!("run.seed", cfg.seed, "an unsigned 64-bit integer");
    scalar!("run.n_paths", cfg.n_paths, "a positive integer");
    scalar!("run.n_envs", cfg.n_envs, "a positive integer");
    list!("run.betas", cfg.betas, "reals");
    list!("run.checkpoints", cfg.checkpoints, "reals");
    scalar!("experiment.slope_epsilon", cfg.slope_epsilon, "a real");
    scalar!("experiment.p", cfg.p, "a real");
    scalar!("experiment.alpha", cfg.alpha, "a real");
    list!("experiment.c_values", cfg.c_values, "reals");
    scalar!("experiment.n_samples", cfg.n_samples, "a positive integer");
    scalar!("experiment.n_bootstrap", cfg.n_bootstrap, "a positive integer");
    scalar!("experiment.sampler_draws", cfg.sampler_draws, "a positive integer");
    scalar!("experiment.sampler_seeds", cfg.sampler_seeds, "a positive integer");
    cfg.theta = 1.0 - 1.0 / cfg.p;
    scalar!("experiment.theta", cfg.theta, "a real");
    if let Some(v) = e.get("env.mode") {
        cfg.mode = EnvMode::parse(&v.value)
            .ok_or_else(|| v.error(format!("env.mode: expected exact-cholesky or spectral, got `{}`", v.value)))?;
    }
    if let Some(v) = e.get("experiment.expect") {
        cfg.expect = match v.value.as_str() {
            "none" => None,
            s => Some(
                Expectation::parse(s)
                    .ok_or_else(|| v.error(format!("experiment.expect: expected strong, weak or none, got `{s}`")))?,
            ),
        };
    }
    if let Some(v) = e.get("run.output") {
        cfg.output = Some(PathBuf::from(&v.value));
    }

    cfg.validate().map_err(|err| {
        // point at the offending key when the message names one
        let msg = err.to_string();
        match KEYS.iter().filter(|k| msg.contains(*k)).find_map(|k| e.get(*k)) {
            Some(entry) => entry.error(msg),
            None => ConfigError {
                line: 0,
                column: 0,
                message: msg,
            },
        }
    })?;
    Ok(cfg)
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
}

/// Writes every key of `cfg`; `parse_config(&render_config(c)) == c`.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut put = |key: &str, value: String| {
        out.push_str(key);
        out.push_str(" = ");
        out.push_str(&value);
        out.push('\n');
    };
    put("kernel.family", cfg.kernel.family.as_str().into());
    put("kernel.sigma2", cfg.kernel.sigma2.to_string());
    put("kernel.length_scale", cfg.kernel.length_scale.to_string());
    put("kernel.lambda", cfg.kernel.lambda.to_string());
    put("kernel.dim", cfg.dim.to_string());
    put("env.mode", cfg.mode.as_str().into());
    put("env.k_features", cfg.k_features.to_string());
    put("env.dt", cfg.dt.to_string());
    put("env.n_steps", cfg.n_steps.to_string());
    put("run.seed", cfg.seed.to_string());
    put("run.n_paths", cfg.n_paths.to_string());
    put("run.n_envs", cfg.n_envs.to_string());
    put("run.betas", join(&cfg.betas));
    put("run.checkpoints", join(&cfg.checkpoints));
    if let Some(o) = &cfg.output {
        put("run.output", o.display().to_string());
    }
    put("experiment.name", cfg.name.clone());
    put("experiment.slope_epsilon", cfg.slope_epsilon.to_string());
    put("experiment.p", cfg.p.to_string());
    put("experiment.alpha", cfg.alpha.to_string());
    put("experiment.theta", cfg.theta.to_string());
    put("experiment.c_values", join(&cfg.c_values));
    put("experiment.n_samples", cfg.n_samples.to_string());
    put("experiment.n_bootstrap", cfg.n_bootstrap.to_string());
    put("experiment.sampler_draws", cfg.sampler_draws.to_string());
    put("experiment.sampler_seeds", cfg.sampler_seeds.to_string());
    put(
        "experiment.expect",
        cfg.expect.map_or("none", Expectation::as_str).into(),
    );
    out
}
