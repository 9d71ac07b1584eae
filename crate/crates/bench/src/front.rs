use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use moqn_core::{get_problem, Method};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{io_err, BenchError, Result};
use crate::report::write_json;
use crate::runner::collect_runs;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontSummary {
    pub problem: String,
    pub method: Method,
    pub starts: usize,
    pub seed: u64,
    pub converged: usize,
    pub failures: usize,
    pub failures_by_reason: BTreeMap<String, usize>,
    pub csv: PathBuf,
}

/// Sidecar path for a front CSV: same stem, `.json` extension.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

/// Writes the final objective vectors of converged runs to `out` (columns
/// `f1..fm`) and the run metadata next to it.
pub fn emit_front(
    problem: &str,
    method: Method,
    starts: usize,
    seed: u64,
    base: &ExperimentConfig,
    out: &Path,
) -> Result<FrontSummary> {
    let config = ExperimentConfig {
        problems: vec![problem.to_string()],
        methods: vec![method],
        starts,
        seed,
        ..base.clone()
    };
    let m = get_problem(problem)
        .map_err(|_| BenchError::UnknownProblem(problem.to_string()))?
        .m();
    let runs = collect_runs(&config)?;

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let ser = |e: csv::Error| BenchError::Serialize {
        path: out.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(out).map_err(ser)?;
    w.write_record((1..=m).map(|i| format!("f{i}"))).map_err(ser)?;
    let mut failures_by_reason = BTreeMap::new();
    let mut converged = 0;
    for run in &runs {
        let r = &run.record;
        if r.converged {
            converged += 1;
            w.write_record(r.final_f.iter().map(|v| v.to_string())).map_err(ser)?;
        } else {
            let reason = r.failure.map_or("unknown", |f| f.as_str());
            *failures_by_reason.entry(reason.to_string()).or_insert(0) += 1;
        }
    }
    w.flush().map_err(io_err(out))?;

    let summary = FrontSummary {
        problem: problem.to_string(),
        method,
        starts,
        seed,
        converged,
        failures: runs.len() - converged,
        failures_by_reason,
        csv: out.to_path_buf(),
    };
    write_json(&sidecar_path(out), &summary)?;
    Ok(summary)
}
