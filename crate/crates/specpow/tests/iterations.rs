mod common;

use common::{eig_fractional_power, gaussian, gram_singular_values, rel_frob, spectral_norm};
use proptest::prelude::*;
use specpow::iterations::{self, run_coupled_chol, IterationPlan, Schedule, Scheme};
use specpow::linalg::{eps_sv, haar_factor_matrix, log_spaced_spectrum};
use specpow::remez::{self, FitSchedule};
use specpow::{Mat, Precision, SpecError};

fn haar(m: usize, n: usize, kappa: f64, seed: u64, precision: Precision) -> Mat {
    haar_factor_matrix(m, n, &log_spaced_spectrum(m.min(n), kappa), seed, precision).unwrap()
}

fn steps_for(scheme: Scheme) -> usize {
    if scheme.is_rational() {
        25
    } else {
        10
    }
}

fn sv_error(g: &Mat, out: &Mat, a: u32, b: u32) -> f64 {
    eps_sv(&gram_singular_values(out), &gram_singular_values(g), a, b)
}

fn run(g: &Mat, a: u32, b: u32, scheme: Scheme, steps: usize, p: Precision) -> iterations::IterationResult {
    iterations::run(g, &IterationPlan::new(a, b, scheme, steps).unwrap(), p).unwrap()
}

#[test]
fn isotropic_input_is_exact() {
    // Schedule fitted for the normalised value 1/√8 shared by every
    // singular value.
    let g = Mat::eye(8);
    let plan = IterationPlan::for_sigma_min(1, 2, Scheme::CoupledChol, 5, 8f64.sqrt().recip()).unwrap();
    let out = iterations::run(&g, &plan, Precision::F64).unwrap().output;
    for s in gram_singular_values(&out) {
        assert!((s - 1.0).abs() < 1e-10);
    }
}

#[test]
fn coupled_chol_ill_conditioned_double() {
    // The Gram route cannot resolve σ ~ 1e−6, so the input spectrum is the
    // prescribed one; the output spectrum spans only two decades.
    let spectrum = log_spaced_spectrum(128, 1e6);
    let g = haar_factor_matrix(128, 256, &spectrum, 1, Precision::F64).unwrap();
    let res = run(&g, 2, 3, Scheme::CoupledChol, 25, Precision::F64);
    assert!(!res.diverged);
    assert!(eps_sv(&gram_singular_values(&res.output), &spectrum, 2, 3) <= 1e-6);
}

#[test]
fn single_precision_separates_chol_from_direct() {
    // At κ = 1e6 the squarings that form Cᵃ lose the top of the spectrum in
    // f32, so only finiteness and the gap to the direct scheme are asserted.
    let g = haar(128, 256, 1e6, 5, Precision::F32);
    let chol = run(&g, 3, 4, Scheme::CoupledChol, 25, Precision::F32);
    let direct = run(&g, 3, 4, Scheme::Direct, 10, Precision::F32);
    assert!(!chol.diverged);
    let e_chol = sv_error(&g, &chol.output, 3, 4);
    let e_direct = if direct.diverged { f64::INFINITY } else { sv_error(&g, &direct.output, 3, 4) };
    assert!(e_direct > 1e-1);
    assert!(e_chol < e_direct);
}

#[test]
fn single_precision_is_accurate_at_moderate_conditioning() {
    let g = haar(128, 256, 1e3, 5, Precision::F32);
    let res = run(&g, 3, 4, Scheme::CoupledChol, 25, Precision::F32);
    assert!(sv_error(&g, &res.output, 3, 4) <= 1e-2);
}

#[test]
fn direct_polar_fixed_point_and_accuracy() {
    let q = haar(16, 8, 1.0, 2, Precision::F64);
    let out = run(&q, 1, 2, Scheme::Direct, 10, Precision::F64).output;
    assert!(rel_frob(&out, &q) < 1e-10);

    let g = haar(64, 32, 10.0, 3, Precision::F64);
    let out = run(&g, 1, 2, Scheme::Direct, 10, Precision::F64).output;
    assert!(spectral_norm(&out.sub(&eig_fractional_power(&g, 0.5))) <= 1e-4);
}

#[test]
fn direct_diverges_in_single_precision_at_high_condition() {
    let g = haar(128, 256, 1e4, 7, Precision::F32);
    let res = run(&g, 3, 4, Scheme::Direct, 40, Precision::F32);
    let bad = res.diverged || sv_error(&g, &res.output, 3, 4) > 1e-1;
    assert!(bad);
    if res.diverged {
        assert!(res.output.data().iter().all(|x| x.is_nan()));
    }
}

/// Cells where ten polynomial steps do not reach 1e−4: either the scalar
/// schedule has not converged from the bottom of the spectrum (inner power
/// k ≥ 4), or the frozen-factor products lose accuracy.
const SLOW_CELLS: &[(Scheme, u32, u32)] = &[
    (Scheme::Direct, 1, 4),
    (Scheme::Direct, 2, 3),
    (Scheme::Direct, 3, 4),
    (Scheme::MAccumulator, 1, 4),
    (Scheme::MAccumulator, 1, 2),
    (Scheme::MAccumulator, 2, 3),
    (Scheme::MAccumulator, 3, 4),
    (Scheme::Coupled, 3, 4),
    (Scheme::CoupledDual, 1, 4),
    (Scheme::CoupledDual, 3, 4),
];

#[test]
fn every_scheme_matches_the_oracle() {
    let g = haar(24, 48, 1e2, 11, Precision::F64);
    for scheme in Scheme::ALL {
        for (a, b) in [(1, 4), (1, 2), (2, 3), (3, 4), (1, 1)] {
            let Ok(plan) = IterationPlan::new(a, b, scheme, steps_for(scheme)) else {
                continue;
            };
            let res = iterations::run(&g, &plan, Precision::F64).unwrap();
            if !res.diverged {
                assert_eq!(res.ledger, plan.expected_ledger(), "{scheme} {a}/{b}");
            }
            if SLOW_CELLS.contains(&(scheme, a, b)) {
                continue;
            }
            let e = sv_error(&g, &res.output, a, b);
            assert!(e <= 1e-4, "{scheme} {a}/{b}: {e:e}");
        }
    }
}

#[test]
fn high_inner_powers_are_schedule_limited() {
    // The scalar composition alone stays far from 1 at the bottom of the
    // spectrum, so the matrix error there is not a rounding artefact.
    let plan = IterationPlan::new(3, 4, Scheme::Coupled, 40).unwrap();
    let Schedule::Poly(s) = &plan.schedule else { unreachable!() };
    assert_eq!(s.k, 4);
    assert!(1.0 - s.compose(s.l0, 10) > 0.1);
    assert!(1.0 - s.compose(s.l0, 40) < 1e-12);
}

#[test]
fn rational_chol_agrees_with_coupled_chol() {
    let g = haar(32, 64, 10.0, 4, Precision::F64);
    let x = run(&g, 2, 3, Scheme::RationalChol, 25, Precision::F64).output;
    let y = run(&g, 2, 3, Scheme::CoupledChol, 25, Precision::F64).output;
    assert!(rel_frob(&x, &y) <= 1e-8);
}

#[test]
fn m_accumulator_defers_gradient_products() {
    let g = haar(8, 128, 10.0, 6, Precision::F64);
    let short = run(&g, 1, 2, Scheme::MAccumulator, 5, Precision::F64).ledger;
    let long = run(&g, 1, 2, Scheme::MAccumulator, 9, Precision::F64).ledger;
    assert_eq!(short.g_mm, long.g_mm);
    assert_eq!(long.g_mm, 2);
}

#[test]
fn coupled_chol_ledger_formula() {
    let g = gaussian(6, 10, 1);
    for (a, b, t) in [(1, 2, 3), (3, 4, 5), (2, 3, 4), (1, 8, 2)] {
        let res = run(&g, a, b, Scheme::CoupledChol, t, Precision::F64);
        let (aw, bw) = if b % 2 == 1 { (2 * a, 2 * b) } else { (a, b) };
        let r = bw / 2;
        let clog2 = |k: u32| if k <= 1 { 0 } else { 32 - (k - 1).leading_zeros() as u64 };
        assert_eq!(res.ledger.qr, 1 + t as u64);
        assert_eq!(res.ledger.g_mm, 1);
        // Powers up to 8 have addition chains of length ⌈log₂ k⌉ except 7.
        assert_eq!(res.ledger.s_mm, t as u64 * (3 + clog2(r)) + clog2(aw), "{a}/{b}");
    }
}

#[test]
fn coupled_chol_returns_the_initial_factor() {
    let g = gaussian(5, 9, 3);
    let res = run(&g, 1, 2, Scheme::CoupledChol, 3, Precision::F64);
    let l = res.l0_factor.unwrap();
    let gn = g.scale(1.0 / res.nu);
    assert!(rel_frob(&l.matmul_nt(&l), &gn.matmul_nt(&gn)) < 1e-12);
}

#[test]
fn epsilon_regularises_zero_rows() {
    let mut g = gaussian(4, 8, 2);
    for j in 0..8 {
        g.set(3, j, 0.0);
    }
    let plan = IterationPlan::new(1, 2, Scheme::CoupledChol, 10).unwrap().with_epsilon(1e-10);
    let res = iterations::run(&g, &plan, Precision::F64).unwrap();
    assert!(!res.diverged);
    assert!(res.output.row(3).iter().all(|x| x.abs() < 1e-6));
}

#[test]
fn wide_and_tall_inputs_agree_by_transposition() {
    let g = gaussian(7, 12, 8);
    let x = run(&g, 1, 4, Scheme::CoupledChol, 25, Precision::F64).output;
    let y = run(&g.transpose(), 1, 4, Scheme::CoupledChol, 25, Precision::F64).output;
    assert!(rel_frob(&y.transpose(), &x) < 1e-12);
}

#[test]
fn output_stays_in_the_input_subspaces() {
    // Rank-4 input of size 6×10: output rows must lie in span of G's rows.
    let g = gaussian(6, 4, 1).matmul(&gaussian(4, 10, 2));
    let plan = IterationPlan::new(1, 2, Scheme::CoupledChol, 25).unwrap().with_epsilon(1e-12);
    let out = iterations::run(&g, &plan, Precision::F64).unwrap().output;
    let svd = specpow::linalg::svd_oracle(&g).unwrap();
    let vr = svd.v.col_block(0, 4);
    let resid = out.sub(&out.matmul(&vr).matmul_nt(&vr));
    assert!(resid.frob_norm() <= 1e-6 * out.frob_norm());
}

#[test]
fn non_positive_pole_parameter_is_rejected() {
    let mut sched: FitSchedule = remez::default_rational_schedule(2, 3).unwrap();
    sched.steps[1].gamma = -1.0;
    let plan = IterationPlan::new(1, 2, Scheme::CoupledChol, 3).unwrap().with_schedule(Schedule::Rational(sched));
    let err = run_coupled_chol(&gaussian(3, 5, 0), &plan, Precision::F64).unwrap_err();
    assert!(matches!(err, SpecError::InvalidSchedule(_)));
}

#[test]
fn invalid_plans_and_inputs() {
    assert!(IterationPlan::new(1, 0, Scheme::CoupledChol, 5).is_err());
    assert!(IterationPlan::new(1, 2, Scheme::CoupledChol, 0).is_err());
    assert!(IterationPlan::new(1, 1, Scheme::CoupledDual, 5).is_err());
    let plan = IterationPlan::new(1, 2, Scheme::CoupledChol, 5).unwrap();
    assert!(matches!(iterations::run(&Mat::zeros(3, 4), &plan, Precision::F64), Err(SpecError::ZeroGradient)));
    let mut g = gaussian(3, 4, 0);
    g.set(0, 0, f64::INFINITY);
    assert!(matches!(iterations::run(&g, &plan, Precision::F64), Err(SpecError::NonFinite)));
}

#[test]
fn plans_reduce_and_double_exponents() {
    let p = IterationPlan::new(4, 6, Scheme::CoupledChol, 5).unwrap();
    assert_eq!((p.a, p.b), (2, 3));
    assert_eq!(p.working_pair(), (4, 6));
    assert!((IterationPlan::auto_epsilon(Precision::F32) - 8.0 * f32::EPSILON as f64 / 2.0).abs() < 1e-20);
}

#[test]
fn minimax_schedule_meets_the_error_bound_for_half_and_above() {
    let g = haar(16, 32, 30.0, 9, Precision::F64);
    let g = g.scale(1.0 / g.frob_norm());
    let s = gram_singular_values(&g);
    let l = s[15];
    for (a, b) in [(1u32, 2u32), (3, 4)] {
        let c = a as f64 / b as f64;
        let target = eig_fractional_power(&g, c);
        for t in 1..=4 {
            let base = IterationPlan::new(a, b, Scheme::CoupledChol, t).unwrap();
            let (_, bw) = base.working_pair();
            let sched = remez::fit_minimax_schedule(base.schedule_l0(l), t, bw).unwrap();
            let out =
                iterations::run(&g, &base.with_schedule(Schedule::Rational(sched)), Precision::F64).unwrap().output;
            let bound = (1.0 - l.powi(b as i32)).powf(3f64.powi(t as i32)) / l.powf(2.0 * c - 1.0);
            assert!(spectral_norm(&target.sub(&out)) <= bound * (1.0 + 1e-9) + 1e-13, "{a}/{b} T={t}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scale_covariance(ci in 0usize..3, pair in 0usize..3, seed in any::<u64>()) {
        let c = [0.5, 2.0, 10.0][ci];
        let (a, b) = [(1, 2), (2, 3), (1, 4)][pair];
        let g = haar(8, 12, 20.0, seed, Precision::F64);
        let x = run(&g, a, b, Scheme::CoupledChol, 25, Precision::F64).output;
        let y = run(&g.scale(c), a, b, Scheme::CoupledChol, 25, Precision::F64).output;
        let expect = x.scale(c.powf(1.0 - 2.0 * a as f64 / b as f64));
        prop_assert!(rel_frob(&y, &expect) <= 1e-10);
    }

    #[test]
    fn ledgers_match_closed_forms(si in 0usize..8, pair in 0usize..5, steps in 1usize..8, seed in any::<u64>()) {
        let scheme = Scheme::ALL[si];
        let (a, b) = [(1, 2), (2, 3), (3, 4), (1, 1), (1, 4)][pair];
        if let Ok(plan) = IterationPlan::new(a, b, scheme, steps) {
            let res = iterations::run(&gaussian(6, 9, seed), &plan, Precision::F64).unwrap();
            prop_assume!(!res.diverged);
            prop_assert_eq!(res.ledger, plan.expected_ledger());
        }
    }
}
