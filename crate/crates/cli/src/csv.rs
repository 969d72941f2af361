//! Bit-stable CSV output.

use std::fs;
use std::io;
use std::path::Path;

use polylab::experiments::SummaryRecord;

pub const HEADER: &str = "experiment,beta,t,estimate,std_error,bound,target,verdict,heuristic,n_envs,n_paths,seed";

/// 17 significant digits, which round-trips every `f64`.
pub fn real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

/// Rows sorted by `(experiment, beta, t)`.
pub fn render(records: &[SummaryRecord]) -> String {
    let mut sorted: Vec<&SummaryRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.beta.total_cmp(&b.beta))
            .then(a.t.total_cmp(&b.t))
    });
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for r in sorted {
        let fields = [
            r.experiment.clone(),
            real(r.beta),
            real(r.t),
            real(r.estimate),
            real(r.std_error),
            optional(r.bound),
            optional(r.target),
            r.verdict.as_str().to_string(),
            r.heuristic.to_string(),
            r.n_envs.to_string(),
            r.n_paths.to_string(),
            r.seed.to_string(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn emit_csv(records: &[SummaryRecord], path: &Path) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, render(records))
}
