use moqn_core::{get_problem, sample_starts, solve, Method, MopProblem, RunRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};

/// A finished run and where it came from.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub problem: String,
    pub start_index: usize,
    pub record: RunRecord,
}

/// One line of `runs.jsonl`. Non-finite numbers serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLine {
    pub problem: String,
    pub method: Method,
    pub x0: Vec<f64>,
    pub converged: bool,
    /// `converged`, or the failure reason tag.
    pub reason: String,
    pub iterations: usize,
    pub fevals: u64,
    pub gevals: u64,
    pub time_ms: f64,
    pub final_f: Vec<Option<f64>>,
    pub final_theta: Option<f64>,
    pub final_sd_norm: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<&RunOutcome> for RunLine {
    fn from(run: &RunOutcome) -> Self {
        let r = &run.record;
        let reason = match (r.converged, r.failure) {
            (true, _) => "converged".to_string(),
            (false, Some(f)) => f.as_str().to_string(),
            (false, None) => "unknown".to_string(),
        };
        Self {
            problem: run.problem.clone(),
            method: r.method,
            x0: r.x0.clone(),
            converged: r.converged,
            reason,
            iterations: r.iterations,
            fevals: r.f_evals,
            gevals: r.g_evals,
            time_ms: r.wall_time * 1e3,
            final_f: r.final_f.iter().map(|&v| finite(v)).collect(),
            final_theta: finite(r.final_theta),
            final_sd_norm: finite(r.final_sd_norm),
        }
    }
}

pub(crate) fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| BenchError::Pool(e.to_string()))
}

/// Solves every (problem, method, start) triple. The output is ordered by
/// problem, then method, then start, whatever the worker count.
pub fn collect_runs(config: &ExperimentConfig) -> Result<Vec<RunOutcome>> {
    config.validate()?;
    let problems = config
        .problems
        .iter()
        .map(|id| {
            let p = get_problem(id)?;
            let starts = sample_starts(&p, config.starts, config.seed);
            Ok((p, starts))
        })
        .collect::<Result<Vec<(MopProblem, Vec<_>)>>>()?;

    let mut tasks = Vec::with_capacity(problems.len() * config.methods.len() * config.starts);
    for (pi, (_, starts)) in problems.iter().enumerate() {
        for &method in &config.methods {
            tasks.extend((0..starts.len()).map(|si| (pi, method, si)));
        }
    }

    pool(config.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(pi, method, si)| {
                let (problem, starts) = &problems[pi];
                let record = solve(problem, &starts[si], &config.solver_config(method))?;
                Ok(RunOutcome {
                    problem: problem.name().to_string(),
                    start_index: si,
                    record,
                })
            })
            .collect()
    })
}
