use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("{problem}: non-finite {what} at x = {x:?}")]
    NonFiniteEvaluation {
        problem: String,
        what: &'static str,
        x: Vec<f64>,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "{problem}: gradient of objective {objective} disagrees with finite differences \
         (relative error {rel_error:e}) at x = {x:?}"
    )]
    GradientMismatch {
        problem: String,
        objective: usize,
        rel_error: f64,
        x: Vec<f64>,
    },

    #[error("degenerate metric: {0}")]
    DegenerateMetric(String),

    #[error("dual solver did not converge: gap {gap:e} after {iterations} iterations")]
    DualNonConvergence { gap: f64, iterations: usize },

    #[error("line search failed after {trials} trials (last step {alpha:e})")]
    LineSearchFailure { trials: usize, alpha: f64 },

    #[error("direction is not a descent direction (D(x, d) = {0:e})")]
    DescentViolation(f64),

    #[error("zero step: x_new equals x_old")]
    ZeroStep,

    #[error("curvature breakdown: {curvature:e} <= {floor:e}")]
    CurvatureBreakdown { curvature: f64, floor: f64 },

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
