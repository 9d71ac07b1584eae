//! Iteration drivers for the four descent methods.
//!
//! All methods share one loop: solve the direction subproblem at `x_k`, stop
//! when `|theta_k| < epsilon`, take a Wolfe step, then update the metric.
//! They differ only in the subproblem metric and in the update applied after
//! the step:
//!
//! | method   | direction metric            | update                          |
//! |----------|-----------------------------|---------------------------------|
//! | `mfqnmo` | common `B_k`                | function-information BFGS       |
//! | `mqnmo`  | common `B_k`                | DFP with `y_k`, skipped if `s^T y <= 0` |
//! | `qnmo`   | `sum_i lambda_i B_i`        | classical BFGS per objective    |
//! | `sd`     | identity                    | none                            |

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dual::{
    solve_dual_common, solve_dual_per_objective, solve_dual_sd, DirectionResult, DualSolverConfig,
};
use crate::error::{Error, Result};
use crate::hessian::{
    build_ingredients, dfp_update, mfbfgs_update, per_objective_bfgs_update, FamilyUpdate, MetricMatrix,
};
use crate::linesearch::{wolfe_search, LineSearchConfig};
use crate::mop::{d_operator, EvalCounter, MopProblem};

/// The inverse metric is re-factorized after every this many updates.
pub const INVERSE_REFRESH_PERIOD: usize = 50;

/// The maintained inverse is also re-factorized as soon as
/// `max |B B^{-1} - I|` exceeds this value.
pub const INVERSE_DRIFT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mfqnmo,
    Mqnmo,
    Qnmo,
    Sd,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mfqnmo, Method::Mqnmo, Method::Qnmo, Method::Sd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Mfqnmo => "mfqnmo",
            Method::Mqnmo => "mqnmo",
            Method::Qnmo => "qnmo",
            Method::Sd => "sd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mfqnmo" => Ok(Method::Mfqnmo),
            "mqnmo" => Ok(Method::Mqnmo),
            "qnmo" => Ok(Method::Qnmo),
            "sd" => Ok(Method::Sd),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMetric {
    Identity,
    /// `c * I` for a positive `c`.
    ScaledIdentity(f64),
}

impl InitialMetric {
    fn build(&self, n: usize) -> Result<MetricMatrix> {
        match *self {
            InitialMetric::Identity => Ok(MetricMatrix::identity(n)),
            InitialMetric::ScaledIdentity(c) if c > 0.0 && c.is_finite() => Ok(MetricMatrix::from_parts(
                DMatrix::identity(n, n) * c,
                DMatrix::identity(n, n) / c,
            )),
            InitialMetric::ScaledIdentity(c) => Err(Error::InvalidConfig(format!("initial metric scale {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub epsilon: f64,
    pub max_iters: usize,
    pub line_search: LineSearchConfig,
    pub dual: DualSolverConfig,
    pub b0: InitialMetric,
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Mfqnmo,
            epsilon: 1e-8,
            max_iters: 500,
            line_search: LineSearchConfig::default(),
            dual: DualSolverConfig::default(),
            b0: InitialMetric::Identity,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        self.line_search.validate()?;
        self.dual.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    MaxIterations,
    LineSearch,
    NonFinite,
    DualSolver,
    DegenerateMetric,
    InvalidConfig,
}

impl FailureReason {
    fn from_error(err: &Error) -> Self {
        match err {
            Error::NonFiniteEvaluation { .. } => FailureReason::NonFinite,
            Error::LineSearchFailure { .. } | Error::DescentViolation(_) => FailureReason::LineSearch,
            Error::DualNonConvergence { .. } => FailureReason::DualSolver,
            Error::DegenerateMetric(_) => FailureReason::DegenerateMetric,
            _ => FailureReason::InvalidConfig,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::MaxIterations => "max_iterations",
            FailureReason::LineSearch => "line_search",
            FailureReason::NonFinite => "non_finite",
            FailureReason::DualSolver => "dual_solver",
            FailureReason::DegenerateMetric => "degenerate_metric",
            FailureReason::InvalidConfig => "invalid_config",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateKind {
    /// The update was applied.
    Applied,
    /// Curvature or factorization breakdown; the metric was reset to `B_0`.
    Reset,
    /// The update was skipped and the metric kept.
    Skipped,
    /// Per-objective family: how many matrices were skipped.
    Partial(usize),
}

/// Diagnostics recorded after each metric update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub kind: UpdateKind,
    /// `gamma^T s` (MFQNMO) or `y^T s` (MQNMO).
    pub curvature: f64,
    /// `sum_i lambda_i (f_i(x_k) - f_i(x_{k+1}))`.
    pub f_decrease: f64,
    pub s_norm_sq: f64,
    /// `|B_{k+1} s_k - gamma_k| / |gamma_k|` for an applied update.
    pub secant_residual: Option<f64>,
    /// `max |B B^{-1} - I|` after the update (largest over a family).
    pub inverse_residual: f64,
    /// Smallest Cholesky pivot of `B_{k+1}`, `None` if factorization failed.
    pub min_pivot: Option<f64>,
    pub asymmetry: f64,
    /// The candidate produced by the formula failed to factorize.
    pub pd_failure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub theta: f64,
    pub lambda: Vec<f64>,
    pub d: Vec<f64>,
    pub d_norm: f64,
    /// `D(x_k, d_k)`.
    pub d_x: f64,
    /// `d_k^T B_k d_k` for the metric that produced the direction.
    pub d_metric_norm_sq: f64,
    /// Duality gap left by the direction solver.
    pub dual_gap: f64,
    /// Largest vertex value of the direction dual.
    pub dual_scale: f64,
    pub alpha: f64,
    pub trials: usize,
    pub update: Option<UpdateRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub attempted: usize,
    pub applied: usize,
    pub resets: usize,
    pub skipped: usize,
    /// Updates whose result failed a Cholesky factorization (counted in `resets`).
    pub pd_failures: usize,
    pub max_secant_residual: f64,
    pub max_inverse_residual: f64,
    pub max_asymmetry: f64,
}

impl UpdateStats {
    fn record(&mut self, rec: &UpdateRecord) {
        self.attempted += 1;
        match rec.kind {
            UpdateKind::Applied => self.applied += 1,
            UpdateKind::Reset => self.resets += 1,
            UpdateKind::Skipped => self.skipped += 1,
            UpdateKind::Partial(k) => {
                if k == 0 {
                    self.applied += 1
                } else {
                    self.skipped += 1
                }
            }
        }
        if rec.pd_failure {
            self.pd_failures += 1;
        }
        if let Some(r) = rec.secant_residual {
            self.max_secant_residual = self.max_secant_residual.max(r);
        }
        self.max_inverse_residual = self.max_inverse_residual.max(rec.inverse_residual);
        self.max_asymmetry = self.max_asymmetry.max(rec.asymmetry);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub converged: bool,
    pub failure: Option<FailureReason>,
    pub iterations: usize,
    pub f_evals: u64,
    pub g_evals: u64,
    /// Seconds spent in the iteration loop.
    pub wall_time: f64,
    pub x0: Vec<f64>,
    pub final_x: Vec<f64>,
    pub final_f: Vec<f64>,
    pub final_theta: f64,
    /// `|d_SD(final_x)|`, computed outside the evaluation budget.
    pub final_sd_norm: f64,
    pub updates: UpdateStats,
    pub trace: Option<Vec<TraceEntry>>,
}

/// Steepest-descent criticality pair `(theta_SD(x), |d_SD(x)|)`.
pub fn criticality_report(problem: &MopProblem, x: &DVector<f64>) -> Result<(f64, f64)> {
    let jac = problem.eval_jacobian(x, &mut EvalCounter::new())?;
    let mut r = solve_dual_sd(&jac, &DualSolverConfig::default())?;
    r.snap(x.norm());
    Ok((r.theta, r.d.norm()))
}

enum MetricState {
    Common(MetricMatrix),
    Family(Vec<MetricMatrix>),
    Identity,
}

struct Iterate {
    x: DVector<f64>,
    f: DVector<f64>,
    jac: DMatrix<f64>,
}

/// Runs one method from `x0`. Numerical failures end the run with
/// `converged = false` and a [`FailureReason`]; only invalid inputs return `Err`.
pub fn solve(problem: &MopProblem, x0: &DVector<f64>, config: &SolverConfig) -> Result<RunRecord> {
    config.validate()?;
    if x0.len() != problem.n() {
        return Err(Error::DimensionMismatch {
            expected: problem.n(),
            got: x0.len(),
        });
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("starting point is not finite".into()));
    }

    let started = Instant::now();
    let mut counter = EvalCounter::new();
    let mut stats = UpdateStats::default();
    let mut trace = config.record_trace.then(Vec::new);
    let n = problem.n();

    let mut record = RunRecord {
        method: config.method,
        converged: false,
        failure: None,
        iterations: 0,
        f_evals: 0,
        g_evals: 0,
        wall_time: 0.0,
        x0: x0.as_slice().to_vec(),
        final_x: x0.as_slice().to_vec(),
        final_f: vec![f64::NAN; problem.m()],
        final_theta: f64::NAN,
        final_sd_norm: f64::NAN,
        updates: UpdateStats::default(),
        trace: None,
    };

    let outcome = (|| -> std::result::Result<(), (FailureReason, Option<Iterate>, f64)> {
        let fail = |e: Error, it: Option<Iterate>, theta: f64| (FailureReason::from_error(&e), it, theta);
        let f = problem.eval_f(x0, &mut counter).map_err(|e| fail(e, None, f64::NAN))?;
        let jac = problem.eval_jacobian(x0, &mut counter).map_err(|e| fail(e, None, f64::NAN))?;
        let mut it = Iterate { x: x0.clone(), f, jac };
        let mut metric = match config.method {
            Method::Mfqnmo | Method::Mqnmo => MetricState::Common(config.b0.build(n).map_err(|e| fail(e, None, f64::NAN))?),
            Method::Qnmo => MetricState::Family(
                (0..problem.m())
                    .map(|_| config.b0.build(n))
                    .collect::<Result<_>>()
                    .map_err(|e| fail(e, None, f64::NAN))?,
            ),
            Method::Sd => MetricState::Identity,
        };

        let mut k = 0usize;
        loop {
            let dir = match direction(&it.jac, &metric, &config.dual) {
                Ok(mut dir) => {
                    dir.snap(it.x.norm());
                    dir
                }
                Err(e) => return Err(fail(e, Some(it), f64::NAN)),
            };
            record.final_theta = dir.theta;
            if dir.theta.abs() < config.epsilon {
                record.iterations = k;
                record.final_x = it.x.as_slice().to_vec();
                record.final_f = it.f.as_slice().to_vec();
                return Ok(());
            }
            if k == config.max_iters {
                return Err((FailureReason::MaxIterations, Some(it), dir.theta));
            }

            let d_x = d_operator(&it.jac, &dir.d);
            let step = match wolfe_search(problem, &it.x, &dir.d, &it.f, d_x, &config.line_search, &mut counter) {
                Ok(step) => step,
                Err(e) => {
                    record.iterations = k;
                    return Err(fail(e, Some(it), dir.theta));
                }
            };
            let d_metric_norm_sq = metric_norm_sq(&metric, &dir);
            let next = Iterate {
                x: step.new_x,
                f: step.new_f,
                jac: step.new_jac,
            };

            let update = update_metric(&mut metric, &it, &next, &dir, config, k + 1);
            if let Some(rec) = &update {
                stats.record(rec);
            }
            if let Some(trace) = trace.as_mut() {
                trace.push(TraceEntry {
                    x: it.x.as_slice().to_vec(),
                    f: it.f.as_slice().to_vec(),
                    theta: dir.theta,
                    lambda: dir.lambda.as_slice().to_vec(),
                    d: dir.d.as_slice().to_vec(),
                    d_norm: dir.d.norm(),
                    d_x,
                    d_metric_norm_sq,
                    dual_gap: dir.gap,
                    dual_scale: dir.dual_scale,
                    alpha: step.alpha,
                    trials: step.trials,
                    update,
                });
            }
            it = next;
            k += 1;
            record.iterations = k;
        }
    })();

    record.wall_time = started.elapsed().as_secs_f64();
    match outcome {
        Ok(()) => record.converged = true,
        Err((reason, it, theta)) => {
            record.failure = Some(reason);
            if let Some(it) = it {
                record.final_x = it.x.as_slice().to_vec();
                record.final_f = it.f.as_slice().to_vec();
            }
            record.final_theta = theta;
        }
    }
    record.f_evals = counter.f_evals;
    record.g_evals = counter.g_evals;
    record.final_sd_norm = criticality_report(problem, &DVector::from_column_slice(&record.final_x))
        .map(|(_, norm)| norm)
        .unwrap_or(f64::NAN);
    record.updates = stats;
    record.trace = trace;
    Ok(record)
}

fn direction(jac: &DMatrix<f64>, metric: &MetricState, cfg: &DualSolverConfig) -> Result<DirectionResult> {
    match metric {
        MetricState::Common(b) => solve_dual_common(jac, b.b_inv(), cfg),
        MetricState::Family(family) => solve_dual_per_objective(jac, family, cfg),
        MetricState::Identity => solve_dual_sd(jac, cfg),
    }
}

fn metric_norm_sq(metric: &MetricState, dir: &DirectionResult) -> f64 {
    let d = &dir.d;
    match metric {
        MetricState::Common(b) => d.dot(&(b.b() * d)),
        MetricState::Family(family) => dir
            .lambda
            .as_slice()
            .iter()
            .zip(family)
            .map(|(l, b)| l * d.dot(&(b.b() * d)))
            .sum(),
        MetricState::Identity => d.norm_squared(),
    }
}

fn diagnostics(
    kind: UpdateKind,
    metric: &MetricMatrix,
    curvature: f64,
    f_decrease: f64,
    s: &DVector<f64>,
    secant_target: Option<&DVector<f64>>,
) -> UpdateRecord {
    UpdateRecord {
        kind,
        curvature,
        f_decrease,
        s_norm_sq: s.norm_squared(),
        secant_residual: secant_target.map(|t| metric.secant_residual(s, t)),
        inverse_residual: metric.inverse_residual(),
        min_pivot: metric.min_pivot(),
        asymmetry: metric.asymmetry(),
        pd_failure: false,
    }
}

/// Accepts `candidate` if it factorizes, refreshing its inverse on schedule;
/// otherwise falls back to `fallback`.
fn accept_candidate(
    candidate: MetricMatrix,
    fallback: MetricMatrix,
    update_index: usize,
) -> (MetricMatrix, bool) {
    match candidate.min_pivot() {
        Some(p) if p > 0.0 => {
            let mut m = candidate;
            let due = update_index % INVERSE_REFRESH_PERIOD == 0 || m.inverse_residual() > INVERSE_DRIFT_TOL;
            if due && m.refresh_inverse().is_err() {
                return (fallback, false);
            }
            (m, true)
        }
        _ => (fallback, false),
    }
}

fn update_metric(
    metric: &mut MetricState,
    old: &Iterate,
    new: &Iterate,
    dir: &DirectionResult,
    config: &SolverConfig,
    update_index: usize,
) -> Option<UpdateRecord> {
    let n = old.x.len();
    let b0 = config.b0.build(n).expect("validated initial metric");
    match (config.method, metric) {
        (Method::Mfqnmo, MetricState::Common(b)) => {
            let ing = match build_ingredients(&old.x, &new.x, &old.jac, &new.jac, &old.f, &new.f, &dir.lambda) {
                Ok(ing) => ing,
                Err(_) => {
                    *b = b0;
                    return Some(diagnostics(UpdateKind::Reset, b, 0.0, 0.0, &(&new.x - &old.x), None));
                }
            };
            let curvature = ing.gamma_dot_s();
            let mut pd_failure = false;
            let (kind, secant) = match mfbfgs_update(b, &ing) {
                Ok(candidate) => {
                    let (next, ok) = accept_candidate(candidate, b0, update_index);
                    *b = next;
                    pd_failure = !ok;
                    if ok {
                        (UpdateKind::Applied, Some(&ing.gamma))
                    } else {
                        (UpdateKind::Reset, None)
                    }
                }
                Err(_) => {
                    *b = b0;
                    (UpdateKind::Reset, None)
                }
            };
            let mut rec = diagnostics(kind, b, curvature, ing.f_decrease, &ing.s, secant);
            rec.pd_failure = pd_failure;
            Some(rec)
        }
        (Method::Mqnmo, MetricState::Common(b)) => {
            let s = &new.x - &old.x;
            let y = dir.lambda.combine_rows(&(&new.jac - &old.jac));
            let f_decrease = dir.lambda.combine(&(&old.f - &new.f));
            let curvature = s.dot(&y);
            let mut pd_failure = false;
            let (kind, secant) = match dfp_update(b, &s, &y) {
                Ok(candidate) => {
                    let (next, ok) = accept_candidate(candidate, b0, update_index);
                    *b = next;
                    pd_failure = !ok;
                    if ok {
                        (UpdateKind::Applied, Some(&y))
                    } else {
                        (UpdateKind::Reset, None)
                    }
                }
                Err(Error::CurvatureBreakdown { .. }) => (UpdateKind::Skipped, None),
                Err(_) => {
                    *b = b0;
                    (UpdateKind::Reset, None)
                }
            };
            let mut rec = diagnostics(kind, b, curvature, f_decrease, &s, secant);
            rec.pd_failure = pd_failure;
            Some(rec)
        }
        (Method::Qnmo, MetricState::Family(family)) => {
            let s = &new.x - &old.x;
            let diff = &new.jac - &old.jac;
            let mu: Vec<DVector<f64>> = (0..diff.nrows()).map(|i| diff.row(i).transpose()).collect();
            let (updated, status) = per_objective_bfgs_update(family, &s, &mu);
            let mut skipped = 0;
            let mut pd_failure = false;
            let mut next = Vec::with_capacity(updated.len());
            for ((candidate, st), prev) in updated.into_iter().zip(&status).zip(family.iter()) {
                if *st == FamilyUpdate::Skipped {
                    skipped += 1;
                    next.push(prev.clone());
                    continue;
                }
                let (m, ok) = accept_candidate(candidate, prev.clone(), update_index);
                if !ok {
                    skipped += 1;
                    pd_failure = true;
                }
                next.push(m);
            }
            *family = next;
            let f_decrease = dir.lambda.combine(&(&old.f - &new.f));
            let curvature = mu.iter().map(|m| m.dot(&s)).fold(f64::INFINITY, f64::min);
            let worst = family
                .iter()
                .max_by(|a, b| a.inverse_residual().total_cmp(&b.inverse_residual()))
                .expect("non-empty family");
            let mut rec = diagnostics(UpdateKind::Partial(skipped), worst, curvature, f_decrease, &s, None);
            rec.min_pivot = family
                .iter()
                .map(|m| m.min_pivot())
                .try_fold(f64::INFINITY, |acc, p| p.map(|p| acc.min(p)));
            rec.asymmetry = family.iter().map(|m| m.asymmetry()).fold(0.0, f64::max);
            rec.pd_failure = pd_failure;
            Some(rec)
        }
        _ => None,
    }
}
