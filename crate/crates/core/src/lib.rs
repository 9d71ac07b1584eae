//! Quasi-Newton methods for smooth unconstrained multiobjective optimization.
//!
//! The main entry point is [`solve`], which drives one of the methods in
//! [`Method`] from a starting point to an approximate Pareto critical point.
//! Benchmark problems live in [`problems`].

pub mod dual;
pub mod error;
pub mod hessian;
pub mod linesearch;
pub mod mop;
pub mod problems;
pub mod solver;

pub use dual::{DirectionResult, DualSolverConfig, DualStrategy, MetricKind};
pub use error::{Error, Result};
pub use hessian::MetricMatrix;
pub use linesearch::{wolfe_search, LineSearchConfig, LineSearchResult};
pub use mop::{check_gradients, d_operator, EvalCounter, GradientReport, MopProblem, Objective, SimplexWeights};
pub use problems::{descriptors, get_descriptor, get_problem, sample_starts, ProblemDescriptor};
pub use solver::{
    criticality_report, solve, FailureReason, InitialMetric, Method, RunRecord, SolverConfig, TraceEntry,
    UpdateKind, UpdateRecord, UpdateStats,
};
