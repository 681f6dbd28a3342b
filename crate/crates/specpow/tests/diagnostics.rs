mod common;

use common::{dd_axpy, dd_dot, gaussian, Dd, DdMat};
use proptest::prelude::*;
use specpow::diagnostics::{
    alignment_gamma, descent_potential_phi, exact_descent_check, optimal_step, DenseHessian, FeatureForm, FnForm,
    FrobeniusForm, QuadraticForm,
};
use specpow::linalg::fractional_power_oracle;
use specpow::rfmodel::{make_rf_problem, Activation, RfProblem};
use specpow::{Mat, SpecError};

/// `f(X − α⟨G̃,D⟩D) − f(X)` evaluated in double-double.
fn dd_delta(p: &RfProblem, x: &Mat, g_batch: &Mat, d: &Mat, alpha: f64) -> f64 {
    let s = Dd::from(alpha).mul(dd_dot(g_batch, d));
    let a = DdMat::from_mat(&p.a_feat);
    let star = DdMat::from_mat(&p.w_star);
    let r0 = DdMat::from_mat(x).sub(&star).matmul(&a);
    let r1 = dd_axpy(x, s, d).sub(&star).matmul(&a);
    let scale = 1.0 / (p.n_samples as f64 * (p.d_dim as f64).sqrt());
    r1.sq_norm().sub(r0.sq_norm()).mul(Dd::from(scale)).to_f64()
}

fn naive_inner(a: &Mat, b: &Mat) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            s += a.get(i, j) * b.get(i, j);
        }
    }
    s
}

/// `2c·(I ⊗ AAᵀ)` over the row-major vectorisation, built entry by entry.
fn materialised_rf_hessian(p: &RfProblem) -> DenseHessian {
    let (o, d) = (p.o_dim, p.d_dim);
    let c = 2.0 / (p.n_samples as f64 * (d as f64).sqrt());
    let a = &p.a_feat;
    let h = Mat::from_fn(o * d, o * d, |r, s| {
        let (i, j) = (r / d, r % d);
        let (k, l) = (s / d, s % d);
        if i != k {
            return 0.0;
        }
        c * (0..a.cols()).map(|n| a.get(j, n) * a.get(l, n)).sum::<f64>()
    });
    DenseHessian { h }
}

#[test]
fn alignment_examples() {
    let g = gaussian(5, 7, 1);
    let d = gaussian(5, 7, 2);
    assert!((alignment_gamma(&g, &g, &d).unwrap() - 1.0).abs() < 1e-15);
    assert!((alignment_gamma(&g.scale(2.0), &g, &d).unwrap() - 2.0).abs() < 1e-14);

    let (gf, gb, dd) = (gaussian(16, 16, 3), gaussian(16, 16, 4), gaussian(16, 16, 5));
    let expect = naive_inner(&gf, &dd) / naive_inner(&gb, &dd);
    assert!((alignment_gamma(&gf, &gb, &dd).unwrap() / expect - 1.0).abs() <= 1e-13);
}

#[test]
fn alignment_errors() {
    let g = Mat::from_diag(&[1.0, 0.0]);
    let d = Mat::from_diag(&[0.0, 1.0]);
    assert!(matches!(alignment_gamma(&g, &g, &d), Err(SpecError::DegenerateDirection)));
    assert!(matches!(alignment_gamma(&g, &g, &gaussian(3, 2, 0)), Err(SpecError::Shape(_))));
}

#[test]
fn potential_examples() {
    let g = gaussian(6, 4, 6);
    let id = FrobeniusForm { scale: 1.0 };
    assert!((descent_potential_phi(&g, &g, &id).unwrap() / g.dot(&g) - 1.0).abs() < 1e-14);
    let d = gaussian(6, 4, 7);
    let base = descent_potential_phi(&g, &d, &id).unwrap();
    for c in [-3.0, 0.01, 7.5] {
        assert!((descent_potential_phi(&g, &d.scale(c), &id).unwrap() / base - 1.0).abs() < 1e-13);
    }
    let flat = FnForm(|_: &Mat| 0.0);
    assert!(matches!(descent_potential_phi(&g, &d, &flat), Err(SpecError::NonPositiveCurvature(x)) if x == 0.0));
}

#[test]
fn rf_curvature_matches_the_materialised_hessian() {
    let p = make_rf_problem(8, 8, 8, Activation::Relu, 3).unwrap();
    let dense = materialised_rf_hessian(&p);
    let form = p.hessian_form();
    for seed in 0..5 {
        let d = gaussian(8, 8, seed);
        let (x, y) = (form.curvature(&d), dense.curvature(&d));
        assert!((x / y - 1.0).abs() <= 1e-12);
        assert!((p.curvature(&d) / y - 1.0).abs() <= 1e-12);
        let g = p.grad_at(&p.w);
        let phi = descent_potential_phi(&g, &d, &form).unwrap();
        let phi_dense = descent_potential_phi(&g, &d, &dense).unwrap();
        assert!((phi / phi_dense - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn descent_identity_examples() {
    let p = make_rf_problem(6, 5, 20, Activation::Relu, 11).unwrap();
    let g_full = p.grad_at(&p.w);
    let g_batch = g_full.add(&gaussian(6, 5, 12).scale(0.1 * g_full.frob_norm() / 5.0));
    let d = fractional_power_oracle(&g_batch, 1, 2).unwrap();

    let zero = exact_descent_check(&p, &p.w, &g_batch, &d, 0.0).unwrap();
    assert_eq!(zero.actual_delta, 0.0);
    assert_eq!(zero.predicted_delta, 0.0);

    let r = exact_descent_check(&p, &p.w, &g_batch, &d, 1.0).unwrap();
    let root = exact_descent_check(&p, &p.w, &g_batch, &d, 2.0 * r.gamma / r.lambda).unwrap();
    assert!(root.predicted_delta.abs() <= 1e-12 * r.phi * r.gamma * r.gamma);
    assert!(root.actual_delta.abs() <= 1e-9 * r.phi * r.gamma * r.gamma);

    let best = exact_descent_check(&p, &p.w, &g_batch, &d, r.gamma / r.lambda).unwrap();
    let target = -0.5 * best.phi * best.gamma * best.gamma;
    assert!((best.actual_delta / target - 1.0).abs() <= 1e-10);
    assert!(best.relative_residual() <= 1e-10);
}

#[test]
fn lmo_direction_has_unit_alignment() {
    let g = gaussian(7, 9, 13);
    let d = fractional_power_oracle(&g, 1, 2).unwrap();
    assert_eq!(alignment_gamma(&g, &g, &d).unwrap(), 1.0);
}

#[test]
fn optimal_step_examples() {
    let a = Mat::from_diag(&[1.0, 1.0]);
    let g = Mat::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let d = Mat::from_rows(&[vec![0.0, 1.0]]).unwrap();
    assert_eq!(optimal_step(&g, &d, &a, 2).unwrap(), 0.0);

    // One weight, one feature: η* = g / h with h = 2a²/(N√d).
    let a = Mat::from_diag(&[3.0]);
    let g = Mat::from_diag(&[1.5]);
    let d = Mat::from_diag(&[1.0]);
    assert!((optimal_step(&g, &d, &a, 1).unwrap() - 1.5 / 18.0).abs() < 1e-15);

    let p = make_rf_problem(10, 8, 30, Activation::Relu, 14).unwrap();
    let g = p.grad_at(&p.w);
    let d = fractional_power_oracle(&g, 1, 2).unwrap();
    let eta = optimal_step(&g, &d, &p.a_feat, p.d_dim).unwrap();
    let at = |e: f64| p.loss_at(&p.w.sub(&d.scale(e)));
    assert!(at(eta) <= at(0.9 * eta) && at(eta) <= at(1.1 * eta));
    assert!(optimal_step(&g, &Mat::zeros(10, 8), &p.a_feat, p.d_dim).is_err());
}

#[test]
fn feature_form_uses_the_rf_constant() {
    let a = gaussian(4, 9, 15);
    let f = FeatureForm::rf(&a);
    assert!((f.scale - 2.0 / (9.0 * 2.0)).abs() < 1e-16);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn descent_identity_is_exact_on_quadratics(seed in any::<u64>(), t in 0.05f64..1.6, noise in 0.0f64..0.5) {
        let p = make_rf_problem(6, 5, 12, Activation::Identity, seed).unwrap();
        let x = p.w.add(&gaussian(6, 5, seed ^ 1).scale(0.3));
        let g_full = p.grad_at(&x);
        let g_batch = g_full.add(&gaussian(6, 5, seed ^ 2).scale(noise * g_full.frob_norm() / 6.0));
        let d = gaussian(6, 5, seed ^ 3);
        prop_assume!(g_batch.dot(&d).abs() > 1e-3 * g_batch.frob_norm() * d.frob_norm());
        let probe = exact_descent_check(&p, &x, &g_batch, &d, 1.0).unwrap();
        let alpha = t * probe.gamma / probe.lambda;
        prop_assume!(alpha > 0.0);
        let r = exact_descent_check(&p, &x, &g_batch, &d, alpha).unwrap();
        // Plain double loses digits to cancellation in f(X') − f(X).
        prop_assert!(r.relative_residual() <= 1e-6, "residual {}", r.relative_residual());
        let exact = dd_delta(&p, &x, &g_batch, &d, alpha);
        prop_assert!((r.predicted_delta - exact).abs() <= 1e-10 * exact.abs());
    }

    #[test]
    fn gamma_and_phi_are_scale_invariant(seed in any::<u64>(), c in 0.01f64..100.0) {
        let g = gaussian(4, 6, seed);
        let gb = g.add(&gaussian(4, 6, seed ^ 9).scale(0.2));
        let d = gaussian(4, 6, seed ^ 7);
        prop_assume!(gb.dot(&d).abs() > 1e-6);
        let form = FrobeniusForm { scale: 1.0 };
        let gamma = alignment_gamma(&g, &gb, &d).unwrap();
        for s in [c, -c] {
            prop_assert!((alignment_gamma(&g, &gb, &d.scale(s)).unwrap() - gamma).abs() <= 1e-12 * gamma.abs().max(1.0));
        }
        let phi = descent_potential_phi(&gb, &d, &form).unwrap();
        prop_assert!((descent_potential_phi(&gb, &d.scale(-c), &form).unwrap() / phi - 1.0).abs() <= 1e-12);
    }
}
