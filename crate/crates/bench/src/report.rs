use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use moqn_core::Method;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{io_err, BenchError, Result};
use crate::runner::{collect_runs, RunLine};

pub const RUNS_FILE: &str = "runs.jsonl";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const AGGREGATE_JSON: &str = "aggregate.json";
pub const CSV_HEADER: &str = "problem,method,mean_iter,mean_time_ms,mean_feval,nf";

pub const FEVAL_UNIT: &str = "one evaluation of the full objective vector (all m objectives at one point)";
pub const GEVAL_UNIT: &str = "one evaluation of the full Jacobian";
pub const NF_DEFINITION: &str =
    "runs that did not converge: iteration limit, line-search failure, non-finite values or dual-solver failure";

/// One row of the aggregate table. Means cover all runs, failed ones included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub problem: String,
    pub method: Method,
    pub mean_iter: f64,
    pub mean_time_ms: f64,
    pub mean_feval: f64,
    pub nf: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Means {
    pub runs: usize,
    pub mean_iter: f64,
    pub mean_time_ms: f64,
    pub mean_feval: f64,
    pub mean_geval: f64,
}

impl Means {
    fn over<'a>(lines: impl Iterator<Item = &'a RunLine>) -> Option<Self> {
        let (mut runs, mut iter, mut time, mut feval, mut geval) = (0usize, 0.0, 0.0, 0.0, 0.0);
        for l in lines {
            runs += 1;
            iter += l.iterations as f64;
            time += l.time_ms;
            feval += l.fevals as f64;
            geval += l.gevals as f64;
        }
        let n = runs as f64;
        (runs > 0).then(|| Self {
            runs,
            mean_iter: iter / n,
            mean_time_ms: time / n,
            mean_feval: feval / n,
            mean_geval: geval / n,
        })
    }
}

/// Per-pair entry of the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub problem: String,
    pub method: Method,
    pub nf: usize,
    pub nf_by_reason: BTreeMap<String, usize>,
    pub all_runs: Means,
    /// `None` when no run converged.
    pub converged_only: Option<Means>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sidecar<'a> {
    pub feval_unit: &'static str,
    pub geval_unit: &'static str,
    pub nf_definition: &'static str,
    pub config: &'a ExperimentConfig,
    pub pairs: Vec<PairSummary>,
}

/// Groups lines by (problem, method) in order of first appearance.
fn groups(lines: &[RunLine]) -> Vec<(&str, Method, Vec<&RunLine>)> {
    let mut out: Vec<(&str, Method, Vec<&RunLine>)> = Vec::new();
    for l in lines {
        match out.iter_mut().find(|(p, m, _)| *p == l.problem && *m == l.method) {
            Some(g) => g.2.push(l),
            None => out.push((&l.problem, l.method, vec![l])),
        }
    }
    out
}

pub fn summarize(lines: &[RunLine]) -> Vec<PairSummary> {
    groups(lines)
        .into_iter()
        .map(|(problem, method, runs)| {
            let mut nf_by_reason = BTreeMap::new();
            for l in runs.iter().filter(|l| !l.converged) {
                *nf_by_reason.entry(l.reason.clone()).or_insert(0) += 1;
            }
            PairSummary {
                problem: problem.to_string(),
                method,
                nf: runs.iter().filter(|l| !l.converged).count(),
                nf_by_reason,
                all_runs: Means::over(runs.iter().copied()).expect("groups are non-empty"),
                converged_only: Means::over(runs.iter().copied().filter(|l| l.converged)),
            }
        })
        .collect()
}

pub fn aggregate(lines: &[RunLine]) -> Vec<AggregateRow> {
    summarize(lines).iter().map(row_of).collect()
}

fn row_of(s: &PairSummary) -> AggregateRow {
    AggregateRow {
        problem: s.problem.clone(),
        method: s.method,
        mean_iter: s.all_runs.mean_iter,
        mean_time_ms: s.all_runs.mean_time_ms,
        mean_feval: s.all_runs.mean_feval,
        nf: s.nf,
    }
}

fn serialize_err(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Serialize {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_jsonl(path: &Path, lines: &[RunLine]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for l in lines {
        serde_json::to_writer(&mut w, l).map_err(|e| serialize_err(path, e))?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_aggregate_csv(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| serialize_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| serialize_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| serialize_err(path, e))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

/// Writes `runs.jsonl`, `aggregate.csv` and `aggregate.json` into `config.out_dir`.
pub fn write_outputs(config: &ExperimentConfig, lines: &[RunLine]) -> Result<Vec<AggregateRow>> {
    let dir = &config.out_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let pairs = summarize(lines);
    let rows: Vec<_> = pairs.iter().map(row_of).collect();
    write_jsonl(&dir.join(RUNS_FILE), lines)?;
    write_aggregate_csv(&dir.join(AGGREGATE_CSV), &rows)?;
    let sidecar = Sidecar {
        feval_unit: FEVAL_UNIT,
        geval_unit: GEVAL_UNIT,
        nf_definition: NF_DEFINITION,
        config,
        pairs,
    };
    write_json(&dir.join(AGGREGATE_JSON), &sidecar)?;
    Ok(rows)
}

/// Runs the sweep and writes its outputs.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<AggregateRow>> {
    let runs = collect_runs(config)?;
    let lines: Vec<RunLine> = runs.iter().map(RunLine::from).collect();
    write_outputs(config, &lines)
}
