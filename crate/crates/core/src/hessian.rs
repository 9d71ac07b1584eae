//! Metric matrices and their quasi-Newton updates.
//!
//! Every update keeps `B` and `B^{-1}` side by side: the inverse is advanced
//! with its own rank-two formula instead of being re-factorized, and both
//! halves are symmetrized afterwards.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::mop::SimplexWeights;

/// Updates are refused when `s^T gamma <= CURVATURE_FLOOR * |s|^2`.
pub const CURVATURE_FLOOR: f64 = 1e-12;

/// Relative asymmetry tolerated by [`validate_spd`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// A symmetric positive definite matrix `B` paired with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix {
    b: DMatrix<f64>,
    b_inv: DMatrix<f64>,
}

impl MetricMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            b: DMatrix::identity(n, n),
            b_inv: DMatrix::identity(n, n),
        }
    }

    /// Validates `b` and computes its inverse by Cholesky factorization.
    pub fn from_matrix(b: DMatrix<f64>) -> Result<Self> {
        let chol = validate_spd(&b)?;
        let b_inv = symmetrized(chol.inverse());
        Ok(Self { b, b_inv })
    }

    /// Pairs a matrix with a caller-supplied inverse. No validation.
    pub fn from_parts(b: DMatrix<f64>, b_inv: DMatrix<f64>) -> Self {
        Self { b, b_inv }
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn b_inv(&self) -> &DMatrix<f64> {
        &self.b_inv
    }

    /// `max |B B^{-1} - I|`.
    pub fn inverse_residual(&self) -> f64 {
        let n = self.n();
        let mut prod = &self.b * &self.b_inv;
        for i in 0..n {
            prod[(i, i)] -= 1.0;
        }
        prod.amax()
    }

    /// `max |B - B^T| / max |B|`.
    pub fn asymmetry(&self) -> f64 {
        relative_asymmetry(&self.b)
    }

    /// Smallest Cholesky pivot `L_ii^2` of `B`, or `None` if factorization fails.
    pub fn min_pivot(&self) -> Option<f64> {
        Cholesky::new(self.b.clone()).map(|c| {
            let l = c.l_dirty();
            (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min)
        })
    }

    /// Replaces `B^{-1}` by a freshly factorized inverse of `B`.
    pub fn refresh_inverse(&mut self) -> Result<()> {
        let chol = validate_spd(&self.b)?;
        self.b_inv = symmetrized(chol.inverse());
        Ok(())
    }

    /// `|B s - target| / |target|`.
    pub fn secant_residual(&self, s: &DVector<f64>, target: &DVector<f64>) -> f64 {
        let scale = target.norm();
        let res = (&self.b * s - target).norm();
        if scale > 0.0 {
            res / scale
        } else {
            res
        }
    }
}

fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).amax() / scale
}

fn symmetrized(a: DMatrix<f64>) -> DMatrix<f64> {
    (&a + a.transpose()) * 0.5
}

/// Checks symmetry (to [`SYMMETRY_TOL`] relative) and positive definiteness.
pub fn validate_spd(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if !a.is_square() {
        return Err(Error::DegenerateMetric(format!(
            "matrix is {}x{}, not square",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateMetric("matrix has non-finite entries".into()));
    }
    let asym = relative_asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::DegenerateMetric(format!("asymmetry {asym:e}")));
    }
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::DegenerateMetric("nonpositive pivot in Cholesky factorization".into()))?;
    let l = chol.l_dirty();
    if (0..l.nrows()).any(|i| !(l[(i, i)] > 0.0) || !l[(i, i)].is_finite()) {
        return Err(Error::DegenerateMetric("nonpositive pivot in Cholesky factorization".into()));
    }
    Ok(chol)
}

/// Quantities feeding the function-information BFGS update.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateIngredients {
    /// `x_{k+1} - x_k`.
    pub s: DVector<f64>,
    /// `sum_i lambda_i (grad f_i(x_{k+1}) - grad f_i(x_k))`.
    pub y: DVector<f64>,
    /// `sum_i lambda_i (f_i(x_k) - f_i(x_{k+1}))`.
    pub f_decrease: f64,
    /// `y^T s / |s|^2`.
    pub eta: f64,
    /// `max(-eta, 0) + f_decrease`.
    pub shift: f64,
    /// `y + shift * s`.
    pub gamma: DVector<f64>,
}

impl UpdateIngredients {
    pub fn gamma_dot_s(&self) -> f64 {
        self.gamma.dot(&self.s)
    }
}

/// Assembles `s`, `y`, `eta`, the shift `m_k` and `gamma` from two
/// consecutive iterates, using the weights `lambda` of the direction that
/// produced the step.
pub fn build_ingredients(
    x_old: &DVector<f64>,
    x_new: &DVector<f64>,
    jac_old: &DMatrix<f64>,
    jac_new: &DMatrix<f64>,
    f_old: &DVector<f64>,
    f_new: &DVector<f64>,
    lambda: &SimplexWeights,
) -> Result<UpdateIngredients> {
    let s = x_new - x_old;
    let ss = s.norm_squared();
    if ss == 0.0 {
        return Err(Error::ZeroStep);
    }
    let y = lambda.combine_rows(&(jac_new - jac_old));
    let f_decrease = lambda.combine(&(f_old - f_new));
    let eta = y.dot(&s) / ss;
    let shift = (-eta).max(0.0) + f_decrease;
    let gamma = &y + shift * &s;
    Ok(UpdateIngredients {
        s,
        y,
        f_decrease,
        eta,
        shift,
        gamma,
    })
}

/// BFGS rank-two update of the pair `(B, B^{-1})` enforcing `B' s = g`.
fn bfgs_pair(metric: &MetricMatrix, s: &DVector<f64>, g: &DVector<f64>) -> Result<MetricMatrix> {
    let gs = g.dot(s);
    let floor = CURVATURE_FLOOR * s.norm_squared();
    if !(gs > floor) {
        return Err(Error::CurvatureBreakdown { curvature: gs, floor });
    }
    let bs = metric.b() * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) {
        return Err(Error::DegenerateMetric(format!("s^T B s = {sbs:e}")));
    }
    let mut b = metric.b().clone();
    b.ger(-1.0 / sbs, &bs, &bs, 1.0);
    b.ger(1.0 / gs, g, g, 1.0);

    // (I - s g^T/gs) H (I - g s^T/gs) + s s^T/gs expanded into rank-one terms.
    let hg = metric.b_inv() * g;
    let ghg = g.dot(&hg);
    let mut h = metric.b_inv().clone();
    h.ger(-1.0 / gs, s, &hg, 1.0);
    h.ger(-1.0 / gs, &hg, s, 1.0);
    h.ger((1.0 + ghg / gs) / gs, s, s, 1.0);

    Ok(MetricMatrix::from_parts(symmetrized(b), symmetrized(h)))
}

/// Function-information BFGS update: `B' = B - B s s^T B / s^T B s + gamma gamma^T / gamma^T s`,
/// with the matching inverse update.
pub fn mfbfgs_update(metric: &MetricMatrix, ing: &UpdateIngredients) -> Result<MetricMatrix> {
    bfgs_pair(metric, &ing.s, &ing.gamma)
}

/// DFP update `B' = (I - y s^T/s^T y) B (I - s y^T/s^T y) + y y^T / s^T y`.
/// The inverse follows the dual (BFGS-on-H) formula.
pub fn dfp_update(metric: &MetricMatrix, s: &DVector<f64>, y: &DVector<f64>) -> Result<MetricMatrix> {
    let sy = s.dot(y);
    let floor = CURVATURE_FLOOR * s.norm_squared();
    if !(sy > floor) {
        return Err(Error::CurvatureBreakdown { curvature: sy, floor });
    }
    let rho = 1.0 / sy;
    let bs = metric.b() * s;
    let sbs = s.dot(&bs);
    let mut b = metric.b().clone();
    b.ger(-rho, y, &bs, 1.0);
    b.ger(-rho, &bs, y, 1.0);
    b.ger(rho * rho * sbs + rho, y, y, 1.0);

    let hy = metric.b_inv() * y;
    let yhy = y.dot(&hy);
    if !(yhy > 0.0) {
        return Err(Error::DegenerateMetric(format!("y^T H y = {yhy:e}")));
    }
    let mut h = metric.b_inv().clone();
    h.ger(-1.0 / yhy, &hy, &hy, 1.0);
    h.ger(rho, s, s, 1.0);

    Ok(MetricMatrix::from_parts(symmetrized(b), symmetrized(h)))
}

/// Outcome of one objective's update inside [`per_objective_bfgs_update`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyUpdate {
    Updated,
    Skipped,
}

/// Classical BFGS on each `B_i` with the pair `(s, mu_i)`. Pairs whose curvature
/// falls below the floor leave that matrix unchanged.
pub fn per_objective_bfgs_update(
    family: &[MetricMatrix],
    s: &DVector<f64>,
    mu: &[DVector<f64>],
) -> (Vec<MetricMatrix>, Vec<FamilyUpdate>) {
    assert_eq!(family.len(), mu.len(), "one gradient difference per matrix");
    family
        .iter()
        .zip(mu)
        .map(|(metric, mu_i)| match bfgs_pair(metric, s, mu_i) {
            Ok(updated) => (updated, FamilyUpdate::Updated),
            Err(_) => (metric.clone(), FamilyUpdate::Skipped),
        })
        .unzip()
}
