use proptest::prelude::*;
use specpow::remez::{
    self, cushion_for, default_rational_schedule, error_extrema, fit_minimax_schedule, fit_poly_step,
    fit_rational_schedule, fit_rational_step, lower_bound_for, muon_schedule, poly_alternation, rational_alternation,
    FitSchedule, GAMMA_BOUND,
};
use specpow::SpecError;

/// Alternating extrema of `1 − f` found by an independent plain grid scan.
fn scan_alternation(l: f64, u: f64, f: impl Fn(f64) -> f64, tol: f64) -> (usize, f64) {
    let n = 100_000;
    let vals: Vec<f64> = (0..=n).map(|i| 1.0 - f(l + (u - l) * i as f64 / n as f64)).collect();
    let max = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut signs: Vec<f64> = Vec::new();
    for v in vals.iter().filter(|v| v.abs() >= max * (1.0 - tol)) {
        if signs.last() != Some(&v.signum()) {
            signs.push(v.signum());
        }
    }
    (signs.len(), max)
}

fn check_recursion(s: &FitSchedule) {
    for w in s.steps.windows(2) {
        let next = w[0].eval(w[0].l, s.b);
        assert!((w[1].l - next.min(1.0)).abs() <= 1e-10);
        assert!((w[1].u - (2.0 - next).max(1.0)).abs() <= 1e-10);
        assert!(w[1].l > w[0].l);
    }
    // u₀ = 1 by convention; the recursion then shrinks u toward 1.
    for w in s.steps[1..].windows(2) {
        assert!(w[1].u <= w[0].u);
    }
}

#[test]
fn degenerate_interval_gives_identity_at_one() {
    for b in [2, 4, 8] {
        let s = fit_rational_step(1.0, 1.0, b).unwrap();
        assert!((s.eval(1.0, b) - 1.0).abs() < 1e-15);
        assert!(s.level.abs() < 1e-15);
        assert!((s.alpha + s.beta - 1.0 - s.gamma).abs() < 1e-12);
    }
}

#[test]
fn rational_step_equioscillates() {
    let s = fit_rational_step(0.1, 1.0, 2).unwrap();
    let (alt, max) = scan_alternation(s.l, s.u, |y| s.eval(y, 2), 1e-6);
    assert!(alt >= 4, "alternations {alt}");
    assert!((s.level - (1.0 - s.eval(0.1, 2))).abs() <= 1e-9);
    assert!((max - s.level).abs() <= 1e-9);
    let rep = rational_alternation(&s, 2);
    assert!(rep.alternations >= 4);
    assert!(rep.level_gap <= 1e-9);
}

#[test]
fn rational_step_has_positive_denominator() {
    for (l, b) in [(0.01, 2), (0.3, 4), (0.05, 8), (0.9, 2)] {
        let s = fit_rational_step(l, 1.0, b).unwrap();
        for i in 0..=1000 {
            let y = l + (1.0 - l) * i as f64 / 1000.0;
            assert!(1.0 + s.gamma * y.powi(b as i32) > 0.0);
        }
    }
}

#[test]
fn rational_step_rejects_bad_input() {
    assert!(fit_rational_step(0.5, 1.0, 3).is_err());
    assert!(fit_rational_step(0.0, 1.0, 2).is_err());
    assert!(fit_rational_step(1.5, 1.0, 2).is_err());
}

#[test]
fn five_step_schedule_converges_from_the_default_bound() {
    let s = fit_rational_schedule(lower_bound_for(2), 5, 2, cushion_for(2))
        .or_else(|_| default_rational_schedule(2, 5))
        .unwrap();
    assert!(s.final_l() >= 0.99, "final l {}", s.final_l());
    check_recursion(&s);
}

#[test]
fn single_step_schedule_is_the_floored_fit() {
    let l0 = 0.02;
    let c = 0.05;
    let s = fit_rational_schedule(l0, 1, 4, c).unwrap();
    let direct = fit_rational_step(l0.max(c), 1.0, 4).unwrap();
    let t = &s.steps[0];
    // Same shape: both rescalings of the floored fit, so the ratio of
    // numerator coefficients and the pole parameter agree.
    assert!((t.gamma - direct.gamma).abs() <= 1e-9 * direct.gamma.abs().max(1.0));
    assert!((t.beta / t.alpha - direct.beta / direct.alpha).abs() <= 1e-9 * (direct.beta / direct.alpha).abs());
}

#[test]
fn default_schedules_respect_the_pole_bound() {
    for b in [2, 4, 8] {
        let s = default_rational_schedule(b, 5).unwrap();
        assert!(s.max_gamma() <= GAMMA_BOUND);
        s.validate().unwrap();
        check_recursion(&s);
    }
}

#[test]
fn too_small_cushion_is_reported() {
    match fit_rational_schedule(lower_bound_for(2), 5, 2, 1e-12) {
        Err(SpecError::CushionInsufficient { gamma, bound }) => assert!(gamma.abs() > bound),
        Ok(s) => assert!(s.max_gamma() <= GAMMA_BOUND),
        Err(e) => panic!("unexpected {e}"),
    }
}

#[test]
fn minimax_schedule_follows_the_doubly_exponential_envelope() {
    for (l0, b) in [(0.3, 2), (0.5, 4), (0.2, 2)] {
        let s = fit_minimax_schedule(l0, 3, b).unwrap();
        for t in 1..=3 {
            let level = 1.0 - s.compose(l0, t);
            let env = (1.0 - l0.powi(b as i32)).abs().powi(3i32.pow(t as u32));
            assert!(level <= env * (1.0 + 1e-9) + 1e-15, "l0 {l0} b {b} t {t}: {level} > {env}");
        }
    }
}

#[test]
fn poly_step_examples() {
    let s = fit_poly_step(1.0, 1.0, 1, 1).unwrap();
    assert!((s.eval_p(0.7) - 1.0).abs() < 1e-15);

    let s = fit_poly_step(0.3, 1.0, 1, 3).unwrap();
    assert_eq!(s.coeffs.len(), 3);
    let (alt, max) = scan_alternation(s.l, s.u, |y| s.eval(y), 1e-6);
    assert!(alt >= 4);
    assert!((max - s.level).abs() <= 1e-9);
    assert!(poly_alternation(&s).level_gap <= 1e-9);
}

#[test]
fn muon_schedule_improves_every_step() {
    let s = specpow::optimizers::default_muon_schedule();
    let l0 = s.l0;
    assert_eq!(s.steps.len(), 5);
    let grid: Vec<f64> = (0..=2000).map(|i| l0 + (1.0 - l0) * i as f64 / 2000.0).collect();
    let worst = |t: usize| grid.iter().map(|&y| (1.0 - s.compose(y, t)).abs()).fold(0.0, f64::max);
    let mut prev = worst(0);
    for t in 1..=5 {
        let w = worst(t);
        assert!(w <= prev + 1e-12, "step {t}");
        prev = w;
    }
    assert!(prev <= 0.31, "final error {prev}");
    assert!(muon_schedule(lower_bound_for(2), 5).is_ok());
}

#[test]
fn rationals_beat_polynomials_of_the_same_budget() {
    for l in [0.05, 0.2, 0.6] {
        let r = fit_rational_step(l, 1.0, 2).unwrap();
        let p = fit_poly_step(l, 1.0, 1, 3).unwrap();
        assert!(r.level <= p.level + 1e-12, "l = {l}");
    }
}

#[test]
fn formula_constants() {
    assert!((cushion_for(1) - 1.84e-8).abs() < 1e-22);
    assert!((cushion_for(2) - 1.3565e-4).abs() < 1e-8);
    assert!((lower_bound_for(2) - 1e-11).abs() < 1e-24);
    assert!((lower_bound_for(22) - 0.1).abs() < 1e-14);
    for b in 1..30 {
        assert!(cushion_for(b + 1) > cushion_for(b));
        assert!(lower_bound_for(b + 1) > lower_bound_for(b));
        assert!(cushion_for(b) < 1.0);
    }
}

#[test]
fn schedule_json_round_trip() {
    let s = default_rational_schedule(4, 3).unwrap();
    let text = serde_json::to_string(&s).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["b", "l0", "cushion", "steps"] {
        assert!(v.get(key).is_some());
    }
    for key in ["alpha", "beta", "gamma", "l", "u", "level"] {
        assert!(v["steps"][0].get(key).is_some());
    }
    let back: FitSchedule = serde_json::from_str(&text).unwrap();
    assert_eq!(back, s);
}

#[test]
fn extrema_scan_finds_the_interior_peak() {
    // 1 − f = (y − 0.5)² − 0.15 is positive at both ends, negative at 0.5.
    let ext = error_extrema(0.1, 0.9, &|y| 1.0 - ((y - 0.5) * (y - 0.5) - 0.15));
    assert_eq!(ext.len(), 3);
    assert!((ext[1].0 - 0.5).abs() < 1e-6);
    assert!((ext[1].1 + 0.15).abs() < 1e-12);
    let grid = remez::dense_grid(0.5, 1.0, 11);
    assert_eq!(grid.len(), 11);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn fitted_steps_alternate_and_match_their_level(l in 0.02f64..0.95, bi in 0usize..3) {
        let b = [2u32, 4, 8][bi];
        let s = fit_rational_step(l, 1.0, b).unwrap();
        let rep = rational_alternation(&s, b);
        prop_assert!(rep.level_gap <= 1e-9);
        prop_assert!((rep.max_err - s.level).abs() <= 1e-8 * s.level.max(1e-6));
        prop_assert!(rep.alternations >= 4 || s.level < 1e-13);
    }

    #[test]
    fn schedules_tighten_monotonically(l0 in 0.01f64..0.9, steps in 1usize..5) {
        let s = fit_minimax_schedule(l0, steps, 2).unwrap();
        let mut prev = l0;
        for t in 1..=steps {
            let cur = s.compose(l0, t);
            prop_assert!(cur >= prev && cur <= 1.0 + 1e-12);
            prev = cur;
        }
    }
}
