//! Problem model: objective vectors, Jacobians and evaluation bookkeeping.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ValueFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
pub type GradientFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// One smooth objective `f_i` together with its analytic gradient.
#[derive(Clone)]
pub struct Objective {
    pub value: ValueFn,
    pub gradient: GradientFn,
}

impl Objective {
    pub fn new<F, G>(value: F, gradient: G) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }
}

/// An unconstrained multiobjective problem `min (f_1(x), ..., f_m(x))` over `R^n`.
///
/// The box is only used to draw starting points and gradient-check samples;
/// the solvers never project onto it.
#[derive(Clone)]
pub struct MopProblem {
    name: String,
    n: usize,
    objectives: Vec<Objective>,
    box_low: DVector<f64>,
    box_high: DVector<f64>,
}

impl fmt::Debug for MopProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MopProblem")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.objectives.len())
            .field("box_low", &self.box_low.as_slice())
            .field("box_high", &self.box_high.as_slice())
            .finish()
    }
}

impl MopProblem {
    pub fn new(
        name: impl Into<String>,
        box_low: Vec<f64>,
        box_high: Vec<f64>,
        objectives: Vec<Objective>,
    ) -> Result<Self> {
        let name = name.into();
        let n = box_low.len();
        if n == 0 {
            return Err(Error::InvalidConfig(format!("{name}: dimension must be positive")));
        }
        if box_high.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: box_high.len(),
            });
        }
        if objectives.is_empty() {
            return Err(Error::InvalidConfig(format!("{name}: no objectives")));
        }
        if box_low.iter().zip(&box_high).any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidConfig(format!(
                "{name}: box_low must be strictly below box_high"
            )));
        }
        Ok(Self {
            name,
            n,
            objectives,
            box_low: DVector::from_vec(box_low),
            box_high: DVector::from_vec(box_high),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.objectives.len()
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.objectives
    }

    pub fn box_low(&self) -> &DVector<f64> {
        &self.box_low
    }

    pub fn box_high(&self) -> &DVector<f64> {
        &self.box_high
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Evaluates the full objective vector; counts as one function evaluation.
    pub fn eval_f(&self, x: &DVector<f64>, counter: &mut EvalCounter) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        counter.f_evals += 1;
        let f = DVector::from_iterator(self.m(), self.objectives.iter().map(|o| (o.value)(x)));
        if f.iter().all(|v| v.is_finite()) {
            Ok(f)
        } else {
            Err(self.non_finite("objective value", x))
        }
    }

    /// Evaluates the `m x n` Jacobian whose rows are the objective gradients;
    /// counts as one gradient evaluation.
    pub fn eval_jacobian(&self, x: &DVector<f64>, counter: &mut EvalCounter) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        counter.g_evals += 1;
        let mut jac = DMatrix::zeros(self.m(), self.n);
        for (i, o) in self.objectives.iter().enumerate() {
            let g = (o.gradient)(x);
            if g.len() != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    got: g.len(),
                });
            }
            jac.set_row(i, &g.transpose());
        }
        if jac.iter().all(|v| v.is_finite()) {
            Ok(jac)
        } else {
            Err(self.non_finite("gradient", x))
        }
    }

    fn non_finite(&self, what: &'static str, x: &DVector<f64>) -> Error {
        Error::NonFiniteEvaluation {
            problem: self.name.clone(),
            what,
            x: x.as_slice().to_vec(),
        }
    }

    /// Draws a point uniformly from the sampling box.
    pub fn sample_point<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.n,
            self.box_low
                .iter()
                .zip(self.box_high.iter())
                .map(|(&lo, &hi)| rng.gen_range(lo..hi)),
        )
    }
}

/// Evaluation counts for a single run. One `f_evals` unit is the whole
/// objective vector, one `g_evals` unit the whole Jacobian.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounter {
    pub f_evals: u64,
    pub g_evals: u64,
}

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }
}

/// A point of the unit simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    /// Clamps negative entries to zero and rescales onto the simplex.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() || raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("simplex weights must be finite and non-empty".into()));
        }
        let mut w: Vec<f64> = raw.into_iter().map(|v| v.max(0.0)).collect();
        let total: f64 = w.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidConfig("simplex weights sum to zero".into()));
        }
        w.iter_mut().for_each(|v| *v /= total);
        Ok(Self(w))
    }

    pub fn vertex(m: usize, i: usize) -> Self {
        let mut w = vec![0.0; m];
        w[i] = 1.0;
        Self(w)
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `sum_i lambda_i * v_i`.
    pub fn combine(&self, v: &DVector<f64>) -> f64 {
        self.0.iter().zip(v.iter()).map(|(l, x)| l * x).sum()
    }

    /// `sum_i lambda_i * row_i(jac)` as a column vector.
    pub fn combine_rows(&self, jac: &DMatrix<f64>) -> DVector<f64> {
        jac.transpose() * DVector::from_column_slice(&self.0)
    }
}

/// `D(x, d) = max_i grad f_i(x)^T d` for the Jacobian `jac` evaluated at `x`.
pub fn d_operator(jac: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    assert_eq!(jac.ncols(), d.len(), "Jacobian/direction shape mismatch");
    (jac * d).max()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub problem: String,
    pub samples: usize,
    /// Largest relative error seen for each objective.
    pub max_rel_error: Vec<f64>,
}

impl GradientReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.iter().cloned().fold(0.0, f64::max)
    }
}

pub const GRADIENT_CHECK_TOL: f64 = 1e-5;

/// Compares analytic gradients with central differences at `samples`
/// uniform box points. The step is `1e-6 * (1 + |x_j|)` per coordinate and
/// the error for objective `i` is `max_j |g_j - fd_j| / max(1, max_j |g_j|)`.
pub fn check_gradients(problem: &MopProblem, samples: usize, seed: u64) -> Result<GradientReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = vec![0.0_f64; problem.m()];
    for _ in 0..samples {
        let x = problem.sample_point(&mut rng);
        for (i, obj) in problem.objectives().iter().enumerate() {
            let analytic = (obj.gradient)(&x);
            let err = max_fd_error(&*obj.value, &x, &analytic);
            if !(err <= GRADIENT_CHECK_TOL) {
                return Err(Error::GradientMismatch {
                    problem: problem.name().to_string(),
                    objective: i,
                    rel_error: err,
                    x: x.as_slice().to_vec(),
                });
            }
            worst[i] = worst[i].max(err);
        }
    }
    Ok(GradientReport {
        problem: problem.name().to_string(),
        samples,
        max_rel_error: worst,
    })
}

fn max_fd_error(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, analytic: &DVector<f64>) -> f64 {
    let mut probe = x.clone();
    let mut abs_err = 0.0_f64;
    for j in 0..x.len() {
        let h = 1e-6 * (1.0 + x[j].abs());
        probe[j] = x[j] + h;
        let up = f(&probe);
        probe[j] = x[j] - h;
        let down = f(&probe);
        probe[j] = x[j];
        let fd = (up - down) / (2.0 * h);
        abs_err = abs_err.max((analytic[j] - fd).abs());
    }
    abs_err / analytic.amax().max(1.0)
}
