//! Direction subproblems solved through their duals over the unit simplex.
//!
//! For a metric `M = B^{-1}` the direction subproblem
//! `min_d max_i grad f_i^T d + 1/2 d^T B d` has the dual
//! `min_{lambda in simplex} 1/2 |sum_i lambda_i grad f_i|_M^2`, and the primal
//! solution is recovered as `d = -M sum_i lambda_i grad f_i`,
//! `theta = -1/2 d^T B d`. The per-objective variant replaces `B` by
//! `H(lambda) = sum_i lambda_i B_i`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hessian::{validate_spd, MetricMatrix};
use crate::mop::SimplexWeights;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualStrategy {
    FrankWolfe,
    ProjectedGradient,
    ClosedFormM2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualSolverConfig {
    pub max_iters: usize,
    /// Relative duality-gap target. Quadratic duals stop once
    /// `gap <= tol * max(2 value, 1e-8 max_i |grad f_i|_M^2)`; per-objective
    /// solves stop, or fail, against `tol * max_i |grad f_i|^2_{B_i^{-1}}`.
    pub tol: f64,
    pub strategy: DualStrategy,
}

impl Default for DualSolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-12,
            strategy: DualStrategy::FrankWolfe,
        }
    }
}

impl DualSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidConfig(format!("invalid dual solver config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Identity,
    Common,
    PerObjective,
}

/// Directions with `|d| <= SNAP_TOL * (1 + |x|)` are treated as exactly zero.
pub const SNAP_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionResult {
    pub d: DVector<f64>,
    pub theta: f64,
    pub lambda: SimplexWeights,
    pub metric_used: MetricKind,
    /// Gradient of the dual objective at `lambda`.
    pub dual_gradient: Vec<f64>,
    /// Final Frank-Wolfe duality gap.
    pub gap: f64,
    /// Largest vertex value `max_i |grad f_i|^2` in the dual's metric.
    pub dual_scale: f64,
    pub iterations: usize,
}

impl DirectionResult {
    /// Zeroes `d` and `theta` when `|d|` is below [`SNAP_TOL`] relative to `1 + x_norm`.
    pub fn snap(&mut self, x_norm: f64) {
        if self.d.norm() <= SNAP_TOL * (1.0 + x_norm) {
            self.d.fill(0.0);
            self.theta = 0.0;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.d.iter().all(|&v| v == 0.0)
    }
}

/// Dual objective over the simplex that the Frank-Wolfe loop minimizes.
trait SimplexDual {
    fn m(&self) -> usize;
    fn gradient(&self, lambda: &[f64]) -> Result<Vec<f64>>;
    /// Minimizes along `lambda + t * dir` for `t in [0, t_max]`, given the
    /// slope at `t = 0`.
    fn line_min(&self, lambda: &[f64], dir: &[f64], slope: f64, t_max: f64) -> Result<f64>;
    fn hessian(&self, lambda: &[f64]) -> Result<DMatrix<f64>>;
}

/// `1/2 lambda^T Q lambda` with `Q = J M J^T`.
struct QuadraticDual {
    gram: DMatrix<f64>,
}

impl SimplexDual for QuadraticDual {
    fn m(&self) -> usize {
        self.gram.nrows()
    }

    fn gradient(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let l = DVector::from_column_slice(lambda);
        Ok((&self.gram * l).as_slice().to_vec())
    }

    fn line_min(&self, _lambda: &[f64], dir: &[f64], slope: f64, t_max: f64) -> Result<f64> {
        let e = DVector::from_column_slice(dir);
        let curvature = e.dot(&(&self.gram * &e));
        if curvature > 0.0 {
            Ok((-slope / curvature).clamp(0.0, t_max))
        } else {
            Ok(t_max)
        }
    }

    fn hessian(&self, _lambda: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.gram.clone())
    }
}

/// `1/2 g(lambda)^T H(lambda)^{-1} g(lambda)` with `H(lambda) = sum_i lambda_i B_i`.
struct PerObjectiveDual<'a> {
    jac: &'a DMatrix<f64>,
    family: &'a [MetricMatrix],
}

impl PerObjectiveDual<'_> {
    fn combined(&self, lambda: &[f64]) -> DMatrix<f64> {
        let n = self.jac.ncols();
        let mut h = DMatrix::zeros(n, n);
        for (l, b) in lambda.iter().zip(self.family) {
            if *l > 0.0 {
                h += *l * b.b();
            }
        }
        h
    }

    /// Returns `(d, H(lambda))` for the given weights.
    fn direction(&self, lambda: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let h = self.combined(lambda);
        let chol = validate_spd(&h)?;
        let g = self.jac.transpose() * DVector::from_column_slice(lambda);
        let d = -chol.solve(&g);
        Ok((d, h))
    }

    fn directional_slope(&self, lambda: &[f64], dir: &[f64], t: f64) -> Result<f64> {
        let point: Vec<f64> = lambda.iter().zip(dir).map(|(l, e)| (l + t * e).max(0.0)).collect();
        let grad = self.gradient(&point)?;
        Ok(grad.iter().zip(dir).map(|(g, e)| g * e).sum())
    }
}

impl SimplexDual for PerObjectiveDual<'_> {
    fn m(&self) -> usize {
        self.family.len()
    }

    fn gradient(&self, lambda: &[f64]) -> Result<Vec<f64>> {
        let (d, _) = self.direction(lambda)?;
        let jd = self.jac * &d;
        Ok(self
            .family
            .iter()
            .enumerate()
            .map(|(i, b)| -(jd[i] + 0.5 * d.dot(&(b.b() * &d))))
            .collect())
    }

    fn line_min(&self, lambda: &[f64], dir: &[f64], slope: f64, t_max: f64) -> Result<f64> {
        // The dual is convex along the segment, so its slope is nondecreasing:
        // locate the sign change by Illinois-style false position.
        let slope_hi = self.directional_slope(lambda, dir, t_max)?;
        if slope_hi <= 0.0 {
            return Ok(t_max);
        }
        let (mut a, mut fa) = (0.0, slope);
        let (mut b, mut fb) = (t_max, slope_hi);
        let mut side = 0i8;
        for _ in 0..100 {
            if (b - a) <= 1e-15 * t_max {
                break;
            }
            let mut t = (a * fb - b * fa) / (fb - fa);
            if !(t > a && t < b) {
                t = 0.5 * (a + b);
            }
            let ft = self.directional_slope(lambda, dir, t)?;
            if ft == 0.0 {
                return Ok(t);
            }
            if ft < 0.0 {
                a = t;
                fa = ft;
                if side == -1 {
                    fb *= 0.5;
                }
                side = -1;
            } else {
                b = t;
                fb = ft;
                if side == 1 {
                    fa *= 0.5;
                }
                side = 1;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// `W H^{-1} W^T` with rows `w_i = grad f_i + B_i d`.
    fn hessian(&self, lambda: &[f64]) -> Result<DMatrix<f64>> {
        let (d, h) = self.direction(lambda)?;
        let chol = validate_spd(&h)?;
        let m = self.family.len();
        let mut w = DMatrix::zeros(self.jac.ncols(), m);
        for (i, b) in self.family.iter().enumerate() {
            let col = self.jac.row(i).transpose() + b.b() * &d;
            w.set_column(i, &col);
        }
        let hw = chol.solve(&w);
        let hess = w.transpose() * hw;
        Ok((&hess + hess.transpose()) * 0.5)
    }
}

fn argmin_lowest(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `lambda^T grad - min_i grad_i`.
fn simplex_gap(gradient: &[f64], lambda: &[f64]) -> f64 {
    dot(gradient, lambda) - gradient[argmin_lowest(gradient)]
}

struct DualSolution {
    lambda: Vec<f64>,
    gradient: Vec<f64>,
    gap: f64,
    iterations: usize,
}

/// Frank-Wolfe with away steps. The linear minimization oracle over the
/// simplex is a vertex pick; ties go to the lowest index.
fn frank_wolfe(
    problem: &dyn SimplexDual,
    start: usize,
    floor: f64,
    config: &DualSolverConfig,
) -> Result<DualSolution> {
    let m = problem.m();
    let mut lambda = vec![0.0; m];
    lambda[start] = 1.0;
    let mut gradient = problem.gradient(&lambda)?;
    let mut iterations = 0;
    while iterations < config.max_iters {
        let mean = dot(&gradient, &lambda);
        let toward = argmin_lowest(&gradient);
        let gap = mean - gradient[toward];
        if gap <= config.tol * mean.max(floor) {
            break;
        }
        iterations += 1;

        let mut away = None;
        for i in 0..m {
            if lambda[i] > 0.0 && away.map_or(true, |a: usize| gradient[i] > gradient[a]) {
                away = Some(i);
            }
        }
        let away = away.expect("weights always have a positive entry");
        let away_gap = gradient[away] - mean;

        let (dir, t_max, drop) = if gap >= away_gap || lambda[away] >= 1.0 {
            let mut dir: Vec<f64> = lambda.iter().map(|l| -l).collect();
            dir[toward] += 1.0;
            (dir, 1.0, None)
        } else {
            let mut dir = lambda.clone();
            dir[away] -= 1.0;
            (dir, lambda[away] / (1.0 - lambda[away]), Some(away))
        };
        let slope = dot(&gradient, &dir);
        let t = problem.line_min(&lambda, &dir, slope, t_max)?;
        if t <= 0.0 {
            break;
        }
        for (l, e) in lambda.iter_mut().zip(&dir) {
            *l = (*l + t * e).max(0.0);
        }
        if let Some(a) = drop {
            if t >= t_max {
                lambda[a] = 0.0;
            }
        }
        if t >= 1.0 && drop.is_none() {
            lambda.iter_mut().for_each(|l| *l = 0.0);
            lambda[toward] = 1.0;
        }
        let total: f64 = lambda.iter().sum();
        lambda.iter_mut().for_each(|l| *l /= total);
        gradient = problem.gradient(&lambda)?;
    }
    let mean = dot(&gradient, &lambda);
    let gap = mean - gradient[argmin_lowest(&gradient)];
    let mut sol = DualSolution {
        lambda,
        gradient,
        gap,
        iterations,
    };
    corrective_phase(problem, &mut sol, floor, config)?;
    Ok(sol)
}

/// Quadratic duals aim for `gap <= tol * max(value, QUADRATIC_FLOOR * max_i Q_ii)`.
const QUADRATIC_FLOOR: f64 = 1e-8;

/// Largest `m` for which the corrective phase enumerates faces.
const MAX_EXACT_M: usize = 10;
const CORRECTIVE_STEPS: usize = 50;

/// Exact minimizer of `1/2 l^T Q l + c^T l` over the simplex by solving the
/// equality-constrained problem on every face and keeping the best feasible
/// point.
fn simplex_qp_exact(q: &DMatrix<f64>, c: &[f64]) -> Option<Vec<f64>> {
    let m = q.nrows();
    let value = |l: &[f64]| {
        let v = DVector::from_column_slice(l);
        0.5 * v.dot(&(q * &v)) + dot(c, l)
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1u32 << m) {
        let support: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let k = support.len();
        let mut kkt = DMatrix::zeros(k + 1, k + 1);
        let mut rhs = DVector::zeros(k + 1);
        for (a, &i) in support.iter().enumerate() {
            for (b, &j) in support.iter().enumerate() {
                kkt[(a, b)] = q[(i, j)];
            }
            kkt[(a, k)] = 1.0;
            kkt[(k, a)] = 1.0;
            rhs[a] = -c[i];
        }
        rhs[k] = 1.0;
        let svd = kkt.clone().svd(true, true);
        let eps = 1e-13 * q.amax().max(1.0);
        let Ok(mut sol) = svd.solve(&rhs, eps) else {
            continue;
        };
        // Iterative refinement.
        for _ in 0..2 {
            let residual = &rhs - &kkt * &sol;
            match svd.solve(&residual, eps) {
                Ok(step) => sol += step,
                Err(_) => break,
            }
        }
        if (0..k).any(|a| !(sol[a] >= -1e-12)) {
            continue;
        }
        let mut lambda = vec![0.0; m];
        for (a, &i) in support.iter().enumerate() {
            lambda[i] = sol[a].max(0.0);
        }
        let total: f64 = lambda.iter().sum();
        if !(total > 0.0) {
            continue;
        }
        lambda.iter_mut().for_each(|l| *l /= total);
        let v = value(&lambda);
        if v.is_finite() && best.as_ref().map_or(true, |(bv, _)| v < *bv) {
            best = Some((v, lambda));
        }
    }
    best.map(|(_, l)| l)
}

/// Newton-type steps whose quadratic models are minimized exactly over the
/// simplex, followed by a line search on the segment. Exact in one step for
/// quadratic duals.
fn corrective_phase(
    problem: &dyn SimplexDual,
    sol: &mut DualSolution,
    floor: f64,
    config: &DualSolverConfig,
) -> Result<()> {
    let m = problem.m();
    if m > MAX_EXACT_M {
        return Ok(());
    }
    for _ in 0..CORRECTIVE_STEPS {
        if sol.gap <= config.tol * dot(&sol.gradient, &sol.lambda).max(floor) {
            break;
        }
        let hess = problem.hessian(&sol.lambda)?;
        let hl = &hess * DVector::from_column_slice(&sol.lambda);
        let c: Vec<f64> = (0..m).map(|i| sol.gradient[i] - hl[i]).collect();
        let Some(target) = simplex_qp_exact(&hess, &c) else {
            break;
        };
        let full_gradient = problem.gradient(&target)?;
        let full_gap = simplex_gap(&full_gradient, &target);
        sol.iterations += 1;
        let (lambda, gradient, gap) = if full_gap < sol.gap {
            (target, full_gradient, full_gap)
        } else {
            let dir: Vec<f64> = target.iter().zip(&sol.lambda).map(|(t, l)| t - l).collect();
            let slope = dot(&sol.gradient, &dir);
            if !(slope < 0.0) {
                break;
            }
            let t = problem.line_min(&sol.lambda, &dir, slope, 1.0)?;
            if t <= 0.0 {
                break;
            }
            let mut lambda: Vec<f64> = sol.lambda.iter().zip(&dir).map(|(l, e)| (l + t * e).max(0.0)).collect();
            let total: f64 = lambda.iter().sum();
            lambda.iter_mut().for_each(|l| *l /= total);
            let gradient = problem.gradient(&lambda)?;
            let gap = simplex_gap(&gradient, &lambda);
            if gap >= sol.gap {
                break;
            }
            (lambda, gradient, gap)
        };
        sol.lambda = lambda;
        sol.gradient = gradient;
        sol.gap = gap;
    }
    Ok(())
}

/// Euclidean projection onto the unit simplex (sort-based).
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumulative += uk;
        let candidate = (cumulative - 1.0) / (k as f64 + 1.0);
        if uk - candidate > 0.0 {
            tau = candidate;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

fn projected_gradient(dual: &QuadraticDual, scale: f64, config: &DualSolverConfig) -> DualSolution {
    let m = dual.m();
    let lipschitz = dual.gram.trace().max(f64::MIN_POSITIVE);
    let mut lambda = vec![1.0 / m as f64; m];
    let mut gradient = dual.gradient(&lambda).expect("quadratic gradient");
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < config.max_iters {
        gap = dot(&gradient, &lambda) - gradient[argmin_lowest(&gradient)];
        if gap <= config.tol * scale {
            break;
        }
        iterations += 1;
        let step: Vec<f64> = lambda
            .iter()
            .zip(&gradient)
            .map(|(l, g)| l - g / lipschitz)
            .collect();
        lambda = project_simplex(&step);
        gradient = dual.gradient(&lambda).expect("quadratic gradient");
    }
    DualSolution {
        lambda,
        gradient,
        gap,
        iterations,
    }
}

fn closed_form_m2(dual: &QuadraticDual) -> Result<DualSolution> {
    if dual.m() != 2 {
        return Err(Error::InvalidConfig(format!(
            "closed-form dual requires m = 2, got m = {}",
            dual.m()
        )));
    }
    let q = &dual.gram;
    let denom = q[(0, 0)] - 2.0 * q[(0, 1)] + q[(1, 1)];
    let l1 = if denom > 0.0 {
        ((q[(1, 1)] - q[(0, 1)]) / denom).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let lambda = vec![l1, 1.0 - l1];
    let gradient = dual.gradient(&lambda)?;
    let gap = dot(&gradient, &lambda) - gradient[argmin_lowest(&gradient)];
    Ok(DualSolution {
        lambda,
        gradient,
        gap,
        iterations: 1,
    })
}

fn check_jacobian(jac: &DMatrix<f64>, n: usize) -> Result<()> {
    if jac.nrows() == 0 {
        return Err(Error::InvalidConfig("Jacobian has no rows".into()));
    }
    if jac.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: jac.ncols(),
        });
    }
    Ok(())
}

fn solve_quadratic(
    jac: &DMatrix<f64>,
    metric_inv: Option<&DMatrix<f64>>,
    kind: MetricKind,
    config: &DualSolverConfig,
) -> Result<DirectionResult> {
    config.validate()?;
    let m = jac.nrows();
    // Rows of `jac * M`, so that `Q = (J M) J^T`.
    let scaled = match metric_inv {
        Some(minv) => jac * minv,
        None => jac.clone(),
    };
    let gram = &scaled * jac.transpose();
    let gram = (&gram + gram.transpose()) * 0.5;
    let dual = QuadraticDual { gram };
    let scale = dual.gram.diagonal().max().max(1.0);

    let sol = if m == 1 {
        let lambda = vec![1.0];
        let gradient = dual.gradient(&lambda)?;
        DualSolution {
            lambda,
            gradient,
            gap: 0.0,
            iterations: 0,
        }
    } else {
        match config.strategy {
            DualStrategy::FrankWolfe => {
                let diag = dual.gram.diagonal();
                let start = argmin_lowest(diag.as_slice());
                frank_wolfe(&dual, start, QUADRATIC_FLOOR * diag.max(), config)?
            }
            DualStrategy::ProjectedGradient => projected_gradient(&dual, scale, config),
            DualStrategy::ClosedFormM2 => closed_form_m2(&dual)?,
        }
    };

    let lambda = SimplexWeights::new(sol.lambda)?;
    let g = lambda.combine_rows(jac);
    let d = match metric_inv {
        Some(minv) => -(minv * &g),
        None => -g.clone(),
    };
    let theta = (0.5 * g.dot(&d)).min(0.0);
    let mut result = DirectionResult {
        d,
        theta,
        lambda,
        metric_used: kind,
        dual_gradient: sol.gradient,
        gap: sol.gap,
        dual_scale: dual.gram.diagonal().max(),
        iterations: sol.iterations,
    };
    result.snap(0.0);
    Ok(result)
}

/// Common-matrix direction `d = -B^{-1} sum_i lambda_i grad f_i` for the
/// metric whose inverse is `b_inv`.
pub fn solve_dual_common(
    jac: &DMatrix<f64>,
    b_inv: &DMatrix<f64>,
    config: &DualSolverConfig,
) -> Result<DirectionResult> {
    check_jacobian(jac, b_inv.nrows())?;
    validate_spd(b_inv)?;
    solve_quadratic(jac, Some(b_inv), MetricKind::Common, config)
}

/// Steepest-descent direction (`B = I`).
pub fn solve_dual_sd(jac: &DMatrix<f64>, config: &DualSolverConfig) -> Result<DirectionResult> {
    check_jacobian(jac, jac.ncols())?;
    solve_quadratic(jac, None, MetricKind::Identity, config)
}

/// Per-objective quasi-Newton direction with `H(lambda) = sum_i lambda_i B_i`.
/// Always solved by Frank-Wolfe; `config.strategy` only affects the
/// quadratic duals.
pub fn solve_dual_per_objective(
    jac: &DMatrix<f64>,
    family: &[MetricMatrix],
    config: &DualSolverConfig,
) -> Result<DirectionResult> {
    config.validate()?;
    let n = jac.ncols();
    check_jacobian(jac, n)?;
    if family.len() != jac.nrows() {
        return Err(Error::DimensionMismatch {
            expected: jac.nrows(),
            got: family.len(),
        });
    }
    for b in family {
        if b.n() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: b.n(),
            });
        }
        validate_spd(b.b())?;
    }
    let dual = PerObjectiveDual { jac, family };
    let vertex_values: Vec<f64> = family
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let g = jac.row(i).transpose();
            g.dot(&(b.b_inv() * &g))
        })
        .collect();
    let scale = vertex_values.iter().cloned().fold(0.0, f64::max);
    let start = argmin_lowest(&vertex_values);
    let sol = frank_wolfe(&dual, start, scale, config)?;
    if !(sol.gap <= config.tol * scale) {
        return Err(Error::DualNonConvergence {
            gap: sol.gap,
            iterations: sol.iterations,
        });
    }
    let (d, h) = dual.direction(&sol.lambda)?;
    let theta = (-0.5 * d.dot(&(&h * &d))).min(0.0);
    let mut result = DirectionResult {
        d,
        theta,
        lambda: SimplexWeights::new(sol.lambda)?,
        metric_used: MetricKind::PerObjective,
        dual_gradient: sol.gradient,
        gap: sol.gap,
        dual_scale: scale,
        iterations: sol.iterations,
    };
    result.snap(0.0);
    Ok(result)
}
