//! Vector-valued Wolfe line search.
//!
//! A step `alpha` is accepted when every objective satisfies the Armijo-type
//! decrease `f_i(x + alpha d) <= f_i(x) + sigma1 alpha D(x, d)` and the
//! curvature condition `D(x + alpha d, d) >= sigma2 D(x, d)` holds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mop::{d_operator, EvalCounter, MopProblem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    pub sigma1: f64,
    pub sigma2: f64,
    pub alpha_init: f64,
    pub alpha_max: f64,
    pub max_trials: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            sigma1: 1e-4,
            sigma2: 0.1,
            alpha_init: 1.0,
            alpha_max: 1e10,
            max_trials: 100,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.sigma1
            && self.sigma1 < self.sigma2
            && self.sigma2 < 1.0
            && self.alpha_init > 0.0
            && self.alpha_max >= self.alpha_init
            && self.max_trials > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid line search config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    /// Number of trial points evaluated (each costs one objective-vector evaluation).
    pub trials: usize,
    pub new_x: DVector<f64>,
    pub new_f: DVector<f64>,
    pub new_jac: DMatrix<f64>,
}

/// `f_i(x + alpha d) <= f_i(x) + sigma1 alpha D` for all `i`.
pub fn armijo_holds(f_x: &DVector<f64>, f_trial: &DVector<f64>, alpha: f64, d_x: f64, sigma1: f64) -> bool {
    f_x.iter()
        .zip(f_trial.iter())
        .all(|(&fx, &ft)| ft <= fx + sigma1 * alpha * d_x)
}

/// Bracket-then-bisect search. Trial steps start at `alpha_init`; a failed
/// decrease test shrinks the bracket from above, a failed curvature test
/// raises the lower end and doubles the step until a bracket exists.
/// Jacobians are only evaluated at trials that pass the decrease test.
pub fn wolfe_search(
    problem: &MopProblem,
    x: &DVector<f64>,
    d: &DVector<f64>,
    f_x: &DVector<f64>,
    d_x: f64,
    config: &LineSearchConfig,
    counter: &mut EvalCounter,
) -> Result<LineSearchResult> {
    config.validate()?;
    if !(d_x < 0.0) {
        return Err(Error::DescentViolation(d_x));
    }
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    let mut alpha = config.alpha_init;
    for trial in 1..=config.max_trials {
        let x_trial = x + alpha * d;
        let f_trial = problem.eval_f(&x_trial, counter)?;
        if !armijo_holds(f_x, &f_trial, alpha, d_x, config.sigma1) {
            hi = alpha;
            alpha = 0.5 * (lo + hi);
        } else {
            let jac = problem.eval_jacobian(&x_trial, counter)?;
            if d_operator(&jac, d) >= config.sigma2 * d_x {
                return Ok(LineSearchResult {
                    alpha,
                    trials: trial,
                    new_x: x_trial,
                    new_f: f_trial,
                    new_jac: jac,
                });
            }
            lo = alpha;
            if hi.is_finite() {
                alpha = 0.5 * (lo + hi);
            } else if alpha >= config.alpha_max {
                return Err(Error::LineSearchFailure { trials: trial, alpha });
            } else {
                alpha = (2.0 * alpha).min(config.alpha_max);
            }
        }
        if alpha <= 0.0 || alpha == lo {
            return Err(Error::LineSearchFailure { trials: trial, alpha });
        }
    }
    Err(Error::LineSearchFailure {
        trials: config.max_trials,
        alpha,
    })
}
