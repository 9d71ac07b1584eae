//! Benchmark sweeps over the test-problem registry: parallel execution,
//! per-run JSON lines, an aggregate table and Pareto-front point clouds.

pub mod config;
pub mod error;
pub mod front;
pub mod report;
pub mod runner;

pub use config::{default_jobs, ExperimentConfig};
pub use error::{BenchError, Result};
pub use front::{emit_front, sidecar_path, FrontSummary};
pub use report::{aggregate, run_experiment, summarize, write_outputs, AggregateRow, Means, PairSummary, CSV_HEADER};
pub use runner::{collect_runs, RunLine, RunOutcome};
