//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use moqn_bench::{collect_runs, ExperimentConfig, RunLine, RunOutcome};
use moqn_core::hessian::{build_ingredients, mfbfgs_update, MetricMatrix};
use moqn_core::{
    criticality_report, get_problem, solve, DualSolverConfig, LineSearchConfig, Method, MopProblem, Objective,
    SimplexWeights, SolverConfig, UpdateKind,
};
use moqn_core::dual::solve_dual_common;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

struct Sweep {
    runs: Vec<RunOutcome>,
    seconds: f64,
}

impl Sweep {
    fn of(&self, method: Method) -> impl Iterator<Item = &RunOutcome> {
        self.runs.iter().filter(move |r| r.record.method == method)
    }

    fn nf(&self, problem: &str, method: Method) -> usize {
        self.of(method)
            .filter(|r| r.problem == problem && !r.record.converged)
            .count()
    }

    fn mean_iter(&self, problem: &str, method: Method) -> f64 {
        let runs: Vec<_> = self.of(method).filter(|r| r.problem == problem).collect();
        runs.iter().map(|r| r.record.iterations as f64).sum::<f64>() / runs.len() as f64
    }
}

fn full_sweep() -> Sweep {
    let config = ExperimentConfig {
        record_trace: true,
        ..ExperimentConfig::default()
    };
    let t = Instant::now();
    let runs = collect_runs(&config).expect("benchmark sweep");
    Sweep {
        runs,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn by_problem(counts: &BTreeMap<String, usize>) -> String {
    counts
        .iter()
        .map(|(k, v)| format!("{k}:{v}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn pd_invariant(sweep: &Sweep) -> Verdict {
    let (mut attempted, mut resets, mut violations) = (0usize, 0usize, 0usize);
    for run in sweep.of(Method::Mfqnmo) {
        attempted += run.record.updates.attempted;
        resets += run.record.updates.resets;
        for t in run.record.trace.as_deref().unwrap_or(&[]) {
            let Some(u) = &t.update else { continue };
            let ok = match u.kind {
                UpdateKind::Applied => u.min_pivot.is_some_and(|p| p > 0.0),
                UpdateKind::Reset => true,
                _ => false,
            };
            violations += usize::from(!ok);
        }
    }
    let rate = resets as f64 / attempted.max(1) as f64;
    verdict(
        violations == 0 && rate < 1e-3 && sweep.seconds < 600.0,
        format!(
            "{attempted} updates, {resets} resets ({:.4}%), {violations} non-PD results; full 23x4x200 sweep took {:.1} s",
            100.0 * rate,
            sweep.seconds
        ),
    )
}

fn spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * shift
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-r..r))
}

fn secant_identity(sweep: &Sweep) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_random = 0.0_f64;
    let mut failures = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=3);
        let shift = rng.gen_range(0.1..2.0);
        let metric = MetricMatrix::from_matrix(spd(&mut rng, n, shift)).unwrap();
        let x_old = random_vec(&mut rng, n, 2.0);
        let mut s = random_vec(&mut rng, n, 1.0);
        if s.norm() < 1e-2 {
            s[0] += 0.1;
        }
        let x_new = &x_old + s;
        let j_old = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-3.0..3.0));
        let j_new = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-3.0..3.0));
        let f_old = random_vec(&mut rng, m, 5.0);
        let f_new = &f_old - DVector::from_fn(m, |_, _| rng.gen_range(0.05..3.0));
        let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..1.0)).collect();
        let lambda = SimplexWeights::new(w).unwrap();
        let ing = build_ingredients(&x_old, &x_new, &j_old, &j_new, &f_old, &f_new, &lambda).unwrap();
        match mfbfgs_update(&metric, &ing) {
            Ok(next) => worst_random = worst_random.max(next.secant_residual(&ing.s, &ing.gamma)),
            Err(_) => failures += 1,
        }
    }
    let mut worst_bench = 0.0_f64;
    let mut checked = 0usize;
    for run in sweep.of(Method::Mfqnmo) {
        for t in run.record.trace.as_deref().unwrap_or(&[]) {
            if let Some(r) = t.update.as_ref().filter(|u| u.kind == UpdateKind::Applied).and_then(|u| u.secant_residual) {
                worst_bench = worst_bench.max(r);
                checked += 1;
            }
        }
    }
    verdict(
        failures == 0 && worst_random <= 1e-8 && worst_bench <= 1e-8,
        format!(
            "10000 random instances worst {worst_random:.2e} ({failures} update errors); {checked} benchmark updates worst {worst_bench:.2e}"
        ),
    )
}

fn inverse_consistency(sweep: &Sweep) -> Verdict {
    let mut over = BTreeMap::new();
    let (mut total, mut worst, mut worst_at) = (0usize, 0.0_f64, String::new());
    for run in sweep.of(Method::Mfqnmo) {
        for t in run.record.trace.as_deref().unwrap_or(&[]) {
            let Some(u) = &t.update else { continue };
            total += 1;
            if u.inverse_residual > 1e-8 {
                *over.entry(run.problem.clone()).or_insert(0) += 1;
            }
            if u.inverse_residual > worst {
                worst = u.inverse_residual;
                worst_at = format!("{} start {} (min pivot {:.1e})", run.problem, run.start_index, u.min_pivot.unwrap_or(f64::NAN));
            }
        }
    }
    let count: usize = over.values().sum();
    verdict(
        count == 0,
        format!(
            "{count} of {total} updates above 1e-8 [{}]; worst {worst:.2e} at {worst_at}",
            by_problem(&over)
        ),
    )
}

fn max_dot(jac: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    (0..jac.nrows()).map(|i| jac.row(i).transpose().dot(d)).fold(f64::NEG_INFINITY, f64::max)
}

fn wolfe_satisfaction(sweep: &Sweep) -> Verdict {
    let ls = LineSearchConfig::default();
    let problems: BTreeMap<String, MopProblem> = sweep
        .runs
        .iter()
        .map(|r| r.problem.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .map(|id| (id.clone(), get_problem(&id).unwrap()))
        .collect();
    let (mut steps, mut bad) = (0usize, BTreeMap::new());
    for run in &sweep.runs {
        let p = &problems[&run.problem];
        for t in run.record.trace.as_deref().unwrap_or(&[]) {
            steps += 1;
            let x = DVector::from_column_slice(&t.x);
            let d = DVector::from_column_slice(&t.d);
            let x_next = &x + t.alpha * &d;
            let f: Vec<f64> = p.objectives().iter().map(|o| (o.value)(&x)).collect();
            let f_next: Vec<f64> = p.objectives().iter().map(|o| (o.value)(&x_next)).collect();
            let jac = DMatrix::from_fn(p.m(), p.n(), |i, j| (p.objectives()[i].gradient)(&x)[j]);
            let jac_next = DMatrix::from_fn(p.m(), p.n(), |i, j| (p.objectives()[i].gradient)(&x_next)[j]);
            let dx = max_dot(&jac, &d);
            let armijo = f.iter().zip(&f_next).all(|(a, b)| *b <= a + ls.sigma1 * t.alpha * dx + 1e-12);
            let curvature = max_dot(&jac_next, &d) >= ls.sigma2 * dx - 1e-12;
            if !(armijo && curvature) {
                *bad.entry(format!("{}/{}", run.problem, run.record.method)).or_insert(0) += 1;
            }
        }
    }
    let count: usize = bad.values().sum();
    verdict(count == 0, format!("{steps} accepted steps re-verified, {count} violations [{}]", by_problem(&bad)))
}

fn dual_correctness() -> Verdict {
    let cfg = DualSolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst_theta, mut worst_d) = (0.0_f64, 0.0_f64);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=6);
        let jac = DMatrix::from_fn(2, n, |_, _| rng.gen_range(-1.0..1.0));
        let shift = rng.gen_range(0.5..2.0);
        let minv = spd(&mut rng, n, shift).cholesky().unwrap().inverse();
        let r = solve_dual_common(&jac, &minv, &cfg).unwrap();
        let q = &jac * &minv * jac.transpose();
        let steps = 1_000_000;
        let (mut best, mut best_l) = (f64::INFINITY, 0.0);
        for k in 0..=steps {
            let l = k as f64 / steps as f64;
            let v = 0.5 * (l * l * q[(0, 0)] + 2.0 * l * (1.0 - l) * q[(0, 1)] + (1.0 - l) * (1.0 - l) * q[(1, 1)]);
            if v < best {
                best = v;
                best_l = l;
            }
        }
        let g = jac.row(0).transpose() * best_l + jac.row(1).transpose() * (1.0 - best_l);
        let d_grid = -(&minv * g);
        worst_theta = worst_theta.max((r.theta + best).abs());
        worst_d = worst_d.max((&r.d - d_grid).norm());
    }
    let (mut worst_gap3, mut undercut) = (0.0_f64, 0usize);
    for _ in 0..1000 {
        let n = rng.gen_range(2..=6);
        let jac = DMatrix::from_fn(3, n, |_, _| rng.gen_range(-1.0..1.0));
        let shift = rng.gen_range(0.5..2.0);
        let minv = spd(&mut rng, n, shift).cholesky().unwrap().inverse();
        let r = solve_dual_common(&jac, &minv, &cfg).unwrap();
        let q = &jac * &minv * jac.transpose();
        let mut best = f64::INFINITY;
        for a in 0..=100 {
            for b in 0..=(100 - a) {
                let l = DVector::from_vec(vec![a as f64 / 100.0, b as f64 / 100.0, (100 - a - b) as f64 / 100.0]);
                best = best.min(0.5 * l.dot(&(&q * &l)));
            }
        }
        // The grid point value -best can never beat theta, and must come within 1e-3.
        let theta_grid = -best;
        undercut += usize::from(r.theta < theta_grid - 1e-12);
        worst_gap3 = worst_gap3.max(r.theta - theta_grid);
    }
    verdict(
        worst_theta <= 1e-5 && worst_d <= 1e-4 && undercut == 0 && worst_gap3 <= 1e-3,
        format!(
            "m=2: worst |dtheta| {worst_theta:.2e}, |dd| {worst_d:.2e}; m=3: grid bound gap {worst_gap3:.2e}, {undercut} grid points beat the solver"
        ),
    )
}

fn qualitative_table(sweep: &Sweep) -> Verdict {
    let mf = Method::Mfqnmo;
    let mut parts = Vec::new();
    let a = sweep.nf("BK1", mf) == 0 && sweep.mean_iter("BK1", mf) <= 3.0;
    parts.push(format!("(a) BK1 nf {} iter {:.2}", sweep.nf("BK1", mf), sweep.mean_iter("BK1", mf)));
    let b_nf: Vec<_> = ["JOS1a", "JOS1b", "PNR", "DGO2", "MHHM1"].iter().map(|p| (p, sweep.nf(p, mf))).collect();
    let b = b_nf.iter().all(|(_, nf)| *nf == 0);
    parts.push(format!("(b) nf {:?}", b_nf));
    let c = sweep.nf("DGO1", mf) == 0 && sweep.mean_iter("DGO1", mf) <= 10.0;
    parts.push(format!("(c) DGO1 nf {} iter {:.2}", sweep.nf("DGO1", mf), sweep.mean_iter("DGO1", mf)));
    let set = ["DGO1", "Lov4", "SLCDT1", "MOP2"];
    let nf_mf: usize = set.iter().map(|p| sweep.nf(p, mf)).sum();
    let nf_mq: usize = set.iter().map(|p| sweep.nf(p, Method::Mqnmo)).sum();
    // "Much smaller than starts" read as at most 10% of the 200 starts per problem.
    let d = set
        .iter()
        .all(|p| sweep.nf(p, mf) <= sweep.nf(p, Method::Mqnmo) && sweep.nf(p, Method::Mqnmo) <= 20);
    parts.push(format!("(d) nonconvex set nf mfqnmo {nf_mf} mqnmo {nf_mq}"));
    verdict(a && b && c && d, parts.join("; "))
}

fn criticality(sweep: &Sweep) -> Verdict {
    let problems: BTreeMap<String, MopProblem> = sweep
        .runs
        .iter()
        .map(|r| (r.problem.clone(), ()))
        .collect::<BTreeMap<_, _>>()
        .into_keys()
        .map(|id| (id.clone(), get_problem(&id).unwrap()))
        .collect();
    let (mut converged, mut bad, mut worst) = (0usize, BTreeMap::new(), 0.0_f64);
    for run in sweep.runs.iter().filter(|r| r.record.converged) {
        converged += 1;
        let x = DVector::from_column_slice(&run.record.final_x);
        let (_, norm) = criticality_report(&problems[&run.problem], &x).unwrap();
        if norm > 1e-3 {
            *bad.entry(format!("{}/{}", run.problem, run.record.method)).or_insert(0) += 1;
            worst = worst.max(norm);
        }
    }
    let count: usize = bad.values().sum();
    verdict(
        count == 0,
        format!(
            "{count} of {converged} converged runs with |d_SD| > 1e-3 [{}]; worst {worst:.2e}",
            by_problem(&bad)
        ),
    )
}

/// Textbook single-objective BFGS with the function-information shift and
/// the same bracket-then-bisect weak Wolfe search.
fn textbook_bfgs(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    epsilon: f64,
    iters: usize,
) -> Vec<DVector<f64>> {
    let f = |x: &DVector<f64>| 0.5 * x.dot(&(a * x)) + b.dot(x);
    let grad = |x: &DVector<f64>| a * x + b;
    let ls = LineSearchConfig::default();
    let n = x0.len();
    let mut x = x0.clone();
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut out = vec![x.clone()];
    for _ in 0..iters {
        let g = grad(&x);
        let d = -h.clone().cholesky().unwrap().solve(&g);
        let slope = g.dot(&d);
        if (0.5 * slope).abs() < epsilon {
            break;
        }
        let (mut lo, mut hi, mut alpha) = (0.0_f64, f64::INFINITY, ls.alpha_init);
        let fx = f(&x);
        loop {
            let xt = &x + alpha * &d;
            if f(&xt) > fx + ls.sigma1 * alpha * slope {
                hi = alpha;
                alpha = 0.5 * (lo + hi);
            } else if grad(&xt).dot(&d) < ls.sigma2 * slope {
                lo = alpha;
                alpha = if hi.is_finite() { 0.5 * (lo + hi) } else { (2.0 * alpha).min(ls.alpha_max) };
            } else {
                break;
            }
        }
        let x_new = &x + alpha * &d;
        let s = &x_new - &x;
        let y = grad(&x_new) - &g;
        let eta = y.dot(&s) / s.norm_squared();
        let shift = (-eta).max(0.0) + (fx - f(&x_new));
        let gamma = &y + shift * &s;
        let hs = &h * &s;
        h = &h - &hs * hs.transpose() / s.dot(&hs) + &gamma * gamma.transpose() / gamma.dot(&s);
        x = x_new;
        out.push(x.clone());
    }
    out
}

fn single_objective_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut worst, mut compared, mut instances) = (0.0_f64, 0usize, 0usize);
    let mut length_mismatch = 0;
    for _ in 0..50 {
        let n = rng.gen_range(4..=10);
        let c = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = c.transpose() * &c + DMatrix::identity(n, n) * rng.gen_range(0.1..1.0);
        let b = random_vec(&mut rng, n, 3.0);
        let x0 = random_vec(&mut rng, n, 5.0);
        let (av, bv) = (a.clone(), b.clone());
        let (ag, bg) = (a.clone(), b.clone());
        let problem = MopProblem::new(
            "quadratic",
            vec![-5.0; n],
            vec![5.0; n],
            vec![Objective::new(
                move |x| 0.5 * x.dot(&(&av * x)) + bv.dot(x),
                move |x| &ag * x + &bg,
            )],
        )
        .unwrap();
        let cfg = SolverConfig::for_method(Method::Mfqnmo).with_trace();
        let r = solve(&problem, &x0, &cfg).unwrap();
        let mut ours: Vec<DVector<f64>> = r.trace.unwrap().iter().map(|t| DVector::from_column_slice(&t.x)).collect();
        ours.push(DVector::from_vec(r.final_x.clone()));
        ours.truncate(11);
        let theirs = textbook_bfgs(&a, &b, &x0, cfg.epsilon, 10);
        if ours.len() != theirs.len() {
            length_mismatch += 1;
        }
        for (p, q) in ours.iter().zip(&theirs) {
            worst = worst.max((p - q).norm() / q.norm().max(1.0));
            compared += 1;
        }
        instances += 1;
    }
    verdict(
        worst <= 1e-6 && length_mismatch == 0,
        format!("{instances} quadratics, {compared} iterates compared, worst relative gap {worst:.2e}, {length_mismatch} length mismatches"),
    )
}

fn determinism() -> Verdict {
    let base = ExperimentConfig {
        starts: 10,
        ..ExperimentConfig::default()
    };
    let lines = |jobs: usize| -> Vec<String> {
        let cfg = ExperimentConfig { jobs, ..base.clone() };
        collect_runs(&cfg)
            .unwrap()
            .iter()
            .map(|r| serde_json::to_string(&RunLine { time_ms: 0.0, ..RunLine::from(r) }).unwrap())
            .collect()
    };
    let first = lines(1);
    let again = lines(1);
    let parallel = lines(4);
    let differing = first.iter().zip(&parallel).filter(|(a, b)| a != b).count()
        + first.iter().zip(&again).filter(|(a, b)| a != b).count();
    verdict(
        differing == 0 && first.len() == parallel.len() && first.len() == again.len(),
        format!("{} records compared across a repeat and jobs 1 vs 4, {differing} differ", first.len()),
    )
}

fn main() -> ExitCode {
    let sweep = full_sweep();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("positive definiteness and reset rate", Box::new(|| pd_invariant(&sweep))),
        ("secant identity", Box::new(|| secant_identity(&sweep))),
        ("inverse-pair consistency", Box::new(|| inverse_consistency(&sweep))),
        ("Wolfe satisfaction", Box::new(|| wolfe_satisfaction(&sweep))),
        ("dual-solver correctness", Box::new(dual_correctness)),
        ("qualitative benchmark table", Box::new(|| qualitative_table(&sweep))),
        ("criticality certification", Box::new(|| criticality(&sweep))),
        ("single-objective oracle equivalence", Box::new(single_objective_oracle)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        failed += usize::from(!v.pass);
        println!("criterion {} {name}: {}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
