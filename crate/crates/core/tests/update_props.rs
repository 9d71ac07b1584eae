use moqn_core::hessian::{build_ingredients, dfp_update, mfbfgs_update, validate_spd, MetricMatrix};
use moqn_core::SimplexWeights;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn spd(n: usize, entries: &[f64], shift: f64) -> DMatrix<f64> {
    let a = DMatrix::from_column_slice(n, n, &entries[..n * n]);
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * shift
}

fn condition(b: &DMatrix<f64>) -> f64 {
    let eig = b.clone().symmetric_eigen().eigenvalues;
    eig.max() / eig.min()
}

#[derive(Debug, Clone)]
struct Instance {
    b: DMatrix<f64>,
    x_old: DVector<f64>,
    x_new: DVector<f64>,
    j_old: DMatrix<f64>,
    j_new: DMatrix<f64>,
    f_old: DVector<f64>,
    f_new: DVector<f64>,
    lambda: Vec<f64>,
}

fn instance() -> impl Strategy<Value = Instance> {
    (2usize..=6, 1usize..=3).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-1.0..1.0f64, n * n),
            0.1..2.0f64,
            prop::collection::vec(-2.0..2.0f64, n),
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(-3.0..3.0f64, 2 * m * n),
            prop::collection::vec(-5.0..5.0f64, m),
            prop::collection::vec(0.05..3.0f64, m),
            prop::collection::vec(0.0..1.0f64, m),
        )
            .prop_filter_map("zero weights", move |(be, shift, x, s, jac, f, dec, w)| {
                if w.iter().sum::<f64>() < 1e-3 || s.iter().map(|v| v * v).sum::<f64>() < 1e-4 {
                    return None;
                }
                let x_old = DVector::from_vec(x);
                let x_new = &x_old + DVector::from_vec(s);
                let f_old = DVector::from_vec(f);
                let f_new = &f_old - DVector::from_vec(dec);
                Some(Instance {
                    b: spd(n, &be, shift),
                    x_old,
                    x_new,
                    j_old: DMatrix::from_row_slice(m, n, &jac[..m * n]),
                    j_new: DMatrix::from_row_slice(m, n, &jac[m * n..]),
                    f_old,
                    f_new,
                    lambda: w,
                })
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn mfbfgs_keeps_pd_secant_and_inverse(inst in instance()) {
        let metric = MetricMatrix::from_matrix(inst.b.clone()).unwrap();
        let lambda = SimplexWeights::new(inst.lambda.clone()).unwrap();
        let ing = build_ingredients(&inst.x_old, &inst.x_new, &inst.j_old, &inst.j_new, &inst.f_old, &inst.f_new, &lambda).unwrap();
        prop_assert!(ing.gamma_dot_s() > 0.0);
        let next = mfbfgs_update(&metric, &ing).unwrap();
        prop_assert!(validate_spd(next.b()).is_ok());
        prop_assert!(next.secant_residual(&ing.s, &ing.gamma) <= 1e-8);
        // Random pairs reach cond(B) near 1e8; the product error of a correct
        // inverse pair grows with the conditioning.
        let cond = condition(next.b());
        prop_assert!(
            next.inverse_residual() <= 1e-8f64.max(64.0 * f64::EPSILON * cond),
            "residual {} cond {cond}",
            next.inverse_residual()
        );
        prop_assert!(next.asymmetry() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn update_commutes_with_scaling(inst in instance(), c in 0.1..10.0f64) {
        // (B, gamma) -> (cB, c gamma) scales the updated matrix by c.
        let lambda = SimplexWeights::new(inst.lambda.clone()).unwrap();
        let ing = build_ingredients(&inst.x_old, &inst.x_new, &inst.j_old, &inst.j_new, &inst.f_old, &inst.f_new, &lambda).unwrap();
        let base = mfbfgs_update(&MetricMatrix::from_matrix(inst.b.clone()).unwrap(), &ing).unwrap();
        let mut scaled_ing = ing.clone();
        scaled_ing.gamma *= c;
        let scaled = mfbfgs_update(&MetricMatrix::from_matrix(&inst.b * c).unwrap(), &scaled_ing).unwrap();
        let diff = (scaled.b() - base.b() * c).amax();
        prop_assert!(diff <= 1e-9 * c.max(1.0) * base.b().amax().max(1.0), "diff {diff}");
        let diff_inv = (scaled.b_inv() * c - base.b_inv()).amax();
        prop_assert!(diff_inv <= 1e-9 * c.max(1.0) * base.b_inv().amax().max(1.0));
    }

    #[test]
    fn dfp_secant_holds_with_positive_curvature(inst in instance()) {
        let s = &inst.x_new - &inst.x_old;
        // A y with y^T s > 0: y = A s for SPD A.
        let y = &inst.b * &s;
        let metric = MetricMatrix::identity(s.len());
        let next = dfp_update(&metric, &s, &y).unwrap();
        prop_assert!(next.secant_residual(&s, &y) <= 1e-8);
        prop_assert!(validate_spd(next.b()).is_ok());
        prop_assert!(next.inverse_residual() <= 1e-8);
    }
}
