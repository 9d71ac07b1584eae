use std::path::PathBuf;

use moqn_core::problems::PROBLEM_IDS;
use moqn_core::{get_descriptor, Method, SolverConfig};
use serde::Serialize;

use crate::error::{BenchError, Result};

/// One benchmark sweep: every listed method on every listed problem from the
/// same `starts` points per problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub problems: Vec<String>,
    pub methods: Vec<Method>,
    pub starts: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub out_dir: PathBuf,
    /// Worker threads; results do not depend on this.
    pub jobs: usize,
    /// Keep per-iteration traces in memory (never written to disk).
    #[serde(skip)]
    pub record_trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let solver = SolverConfig::default();
        Self {
            problems: PROBLEM_IDS.iter().map(|s| s.to_string()).collect(),
            methods: Method::ALL.to_vec(),
            starts: 200,
            seed: 42,
            epsilon: solver.epsilon,
            max_iters: solver.max_iters,
            out_dir: PathBuf::from("bench-out"),
            jobs: default_jobs(),
            record_trace: false,
        }
    }
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(BenchError::InvalidConfig("starts must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(BenchError::InvalidConfig("jobs must be at least 1".into()));
        }
        if self.problems.is_empty() || self.methods.is_empty() {
            return Err(BenchError::InvalidConfig("need at least one problem and one method".into()));
        }
        for id in &self.problems {
            get_descriptor(id).map_err(|_| BenchError::UnknownProblem(id.clone()))?;
        }
        self.solver_config(self.methods[0]).validate()?;
        if self.max_iters == 0 {
            return Err(BenchError::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }

    pub fn solver_config(&self, method: Method) -> SolverConfig {
        SolverConfig {
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            record_trace: self.record_trace,
            ..SolverConfig::for_method(method)
        }
    }
}
