//! The eight iteration schemes for `(GGᵀ)^{-a/b} G` and their cost ledgers.
//!
//! Every scheme works on the short-side-first, Frobenius-normalised input
//! `G/ν` with `ν = ‖G‖_F + ε` and rescales the result by `ν^{1−2a/b}`.
//! Internally each step acts on a scalar variable `y` per singular value that
//! converges to 1; the schedule is fitted on that variable.

mod chol;
mod poly;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpecError};
use crate::linalg::{power_cost, CostLedger, Engine, Mat, Precision};
use crate::remez::{self, FitSchedule, PolySchedule};

pub use chol::{run_coupled_chol, run_rational_chol};
pub use poly::{run_coupled, run_coupled_ab, run_coupled_dual, run_direct, run_dual_ab, run_m_accumulator};

/// Number of coefficients of the inner polynomial `P` (degree 2).
pub const POLY_TERMS: usize = 3;
/// Default lower singular-value bound for polynomial schedules.
pub const POLY_SIGMA_FLOOR: f64 = 1e-3;
/// Default cross-stabilizer weight of the coupled-dual scheme.
pub const DEFAULT_STABILIZER: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Direct,
    MAccumulator,
    Coupled,
    CoupledAb,
    DualAb,
    CoupledDual,
    RationalChol,
    CoupledChol,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Direct,
        Scheme::MAccumulator,
        Scheme::Coupled,
        Scheme::CoupledAb,
        Scheme::DualAb,
        Scheme::CoupledDual,
        Scheme::RationalChol,
        Scheme::CoupledChol,
    ];

    pub fn is_rational(self) -> bool {
        matches!(self, Scheme::RationalChol | Scheme::CoupledChol)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Direct => "direct",
            Scheme::MAccumulator => "m-accumulator",
            Scheme::Coupled => "coupled",
            Scheme::CoupledAb => "coupled-ab",
            Scheme::DualAb => "dual-ab",
            Scheme::CoupledDual => "coupled-dual",
            Scheme::RationalChol => "rational-chol",
            Scheme::CoupledChol => "coupled-chol",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = SpecError;
    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| SpecError::Config { path: "scheme".into(), msg: format!("unknown scheme {s}") })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Schedule {
    Rational(FitSchedule),
    Poly(PolySchedule),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationPlan {
    /// Exponent pair in lowest terms.
    pub a: u32,
    pub b: u32,
    pub steps: usize,
    pub epsilon: f64,
    pub scheme: Scheme,
    pub schedule: Schedule,
    pub stabilizer_gamma: f64,
}

#[derive(Clone, Debug)]
pub struct IterationResult {
    pub output: Mat,
    pub ledger: CostLedger,
    /// Initial factor with `L₀L₀ᵀ = GGᵀ/ν² + εI` (Cholesky schemes only).
    pub l0_factor: Option<Mat>,
    /// `ν = ‖G‖_F + ε` used for normalisation.
    pub nu: f64,
    pub diverged: bool,
    /// Power `k` of the polynomial argument (polynomial schemes only).
    pub k: Option<u32>,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Smallest positive `k` such that every `k·p/q` in `fracs` is integral.
fn smallest_k(fracs: &[(i64, i64)]) -> u32 {
    (1..=4096u32)
        .find(|&k| fracs.iter().all(|&(p, q)| (k as i64 * p) % q == 0))
        .expect("exponent denominators are small")
}

impl IterationPlan {
    /// Plan with the scheme's default schedule.
    pub fn new(a: u32, b: u32, scheme: Scheme, steps: usize) -> Result<Self> {
        Self::build(a, b, scheme, steps, None)
    }

    /// Plan whose schedule is fitted for inputs whose normalised smallest
    /// singular value is at least `sigma_min`.
    pub fn for_sigma_min(a: u32, b: u32, scheme: Scheme, steps: usize, sigma_min: f64) -> Result<Self> {
        Self::build(a, b, scheme, steps, Some(sigma_min))
    }

    fn build(a: u32, b: u32, scheme: Scheme, steps: usize, sigma_min: Option<f64>) -> Result<Self> {
        if b == 0 {
            return Err(SpecError::InvalidPlan("b must be positive".into()));
        }
        if steps == 0 {
            return Err(SpecError::InvalidPlan("steps must be positive".into()));
        }
        let g = gcd(a, b).max(1);
        let (a, b) = (a / g, b / g);
        if a == 0 && scheme != Scheme::CoupledChol && scheme != Scheme::RationalChol {
            return Err(SpecError::InvalidPlan("a = 0 is the identity map".into()));
        }
        if scheme == Scheme::CoupledDual && a >= b {
            return Err(SpecError::InvalidPlan("coupled-dual needs 0 < a/b < 1".into()));
        }
        if matches!(scheme, Scheme::DualAb | Scheme::CoupledAb) && a > b {
            return Err(SpecError::InvalidPlan(format!("{scheme} needs a ≤ b")));
        }
        let mut plan = IterationPlan {
            a,
            b,
            steps,
            epsilon: 0.0,
            scheme,
            schedule: Schedule::Poly(PolySchedule { k: 1, l0: 1.0, steps: vec![] }),
            stabilizer_gamma: DEFAULT_STABILIZER,
        };
        plan.schedule = if scheme.is_rational() {
            let (_, bw) = plan.working_pair();
            let sched = match sigma_min {
                Some(s) => {
                    let l0 = plan.schedule_l0(s);
                    remez::fit_with_default_cushion(l0, steps, bw)?
                }
                None => default_rational_schedule_cached(bw, steps)?,
            };
            Schedule::Rational(sched)
        } else {
            let s = sigma_min.unwrap_or(POLY_SIGMA_FLOOR);
            let l0 = plan.schedule_l0(s);
            Schedule::Poly(remez::fit_poly_schedule(l0, steps, plan.poly_k(), POLY_TERMS)?)
        };
        Ok(plan)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_stabilizer(mut self, gamma: f64) -> Self {
        self.stabilizer_gamma = gamma;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    /// Regularisation `8u` in normalised Gram units for `precision`.
    pub fn auto_epsilon(precision: Precision) -> f64 {
        8.0 * precision.unit_roundoff()
    }

    /// Exponent pair used inside the loop: `b` doubled when odd for the
    /// Cholesky schemes, unchanged otherwise.
    pub fn working_pair(&self) -> (u32, u32) {
        if self.scheme.is_rational() && self.b % 2 == 1 {
            (2 * self.a, 2 * self.b)
        } else {
            (self.a, self.b)
        }
    }

    /// Power `k` of the polynomial argument.
    pub fn poly_k(&self) -> u32 {
        let (a, b) = (self.a as i64, self.b as i64);
        match self.scheme {
            Scheme::Direct => {
                if a == b {
                    1
                } else {
                    smallest_k(&[(2 * a - b, 2 * b), (1, 2)])
                }
            }
            Scheme::MAccumulator | Scheme::Coupled => smallest_k(&[(a, b)]),
            Scheme::CoupledDual => smallest_k(&[(a, b), (b - a, b)]),
            Scheme::CoupledAb | Scheme::DualAb => self.b,
            Scheme::RationalChol | Scheme::CoupledChol => self.working_pair().1,
        }
    }

    /// Starting value of the scalar schedule variable for a normalised
    /// singular value `sigma`.
    pub fn schedule_l0(&self, sigma: f64) -> f64 {
        let c = self.a as f64 / self.b as f64;
        let s = sigma.clamp(f64::MIN_POSITIVE, 1.0);
        match self.scheme {
            Scheme::RationalChol | Scheme::CoupledChol => s.powf(2.0 / self.working_pair().1 as f64),
            Scheme::CoupledAb | Scheme::DualAb => s.powf(2.0 / self.b as f64),
            Scheme::CoupledDual => s.powf(2.0 * c).min(s.powf(2.0 * (1.0 - c))),
            Scheme::Direct | Scheme::MAccumulator | Scheme::Coupled => s.powf(2.0 * c),
        }
    }

    /// Closed-form primitive counts for this plan.
    pub fn expected_ledger(&self) -> CostLedger {
        let k = self.poly_k();
        let (a, b) = (self.a, self.b);
        let t = self.steps as u64;
        let pc = power_cost;
        match self.scheme {
            Scheme::Direct => {
                let (init, step) = if 2 * a == b {
                    (CostLedger::new(0, 0, 0), CostLedger::new(2, 1 + pc(k / 2), 0))
                } else if a == b {
                    (CostLedger::new(0, 0, 0), CostLedger::new(2, 1, 0))
                } else {
                    let e = frozen_exponent(a, b, k);
                    let init = if e > 0 {
                        CostLedger::new(1, pc(e as u32), 0)
                    } else {
                        CostLedger::new(0, 1 + pc((-e) as u32), 1)
                    };
                    (init, CostLedger::new(2, 2 + pc(k / 2), 0))
                };
                init + step * t
            }
            Scheme::MAccumulator => {
                let init = CostLedger::new(1, pc(k * a / b), 0);
                let step = CostLedger::new(0, pc(k) + 3, 0);
                init + step * t + CostLedger::new(1, 0, 0)
            }
            Scheme::Coupled => {
                let init = CostLedger::new(1, pc(k * a / b), 0);
                init + CostLedger::new(1, pc(k) + 2, 0) * t
            }
            Scheme::CoupledAb => CostLedger::new(1, 0, 0) + CostLedger::new(1, 2 + pc(a) + pc(b), 0) * t,
            Scheme::DualAb => {
                let g = if a == b { 2 } else { 3 };
                CostLedger::new(g, 1 + pc(a) + pc(b - a), 0) * t
            }
            Scheme::CoupledDual => {
                let init = CostLedger::new(1, pc(k * a / b) + pc(k * (b - a) / b), 0);
                init + CostLedger::new(3, 4 + 2 * pc(k), 0) * t
            }
            Scheme::RationalChol | Scheme::CoupledChol => {
                let (aw, bw) = self.working_pair();
                let r = bw / 2;
                let init = CostLedger::new(0, 0, 1);
                let step = CostLedger::new(0, 3 + pc(r), 1);
                let fin = CostLedger::new(1, pc(aw), 0);
                init + step * t + fin
            }
        }
    }
}

/// Exponent of the frozen Gram factor of the direct scheme, `k(a/b − 1/2)`.
fn frozen_exponent(a: u32, b: u32, k: u32) -> i64 {
    (k as i64 * (2 * a as i64 - b as i64)) / (2 * b as i64)
}

fn default_rational_schedule_cached(b: u32, steps: usize) -> Result<FitSchedule> {
    static CACHE: OnceLock<Mutex<HashMap<(u32, usize), FitSchedule>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(s) = cache.lock().expect("schedule cache").get(&(b, steps)) {
        return Ok(s.clone());
    }
    let s = remez::default_rational_schedule(b, steps)?;
    cache.lock().expect("schedule cache").insert((b, steps), s.clone());
    Ok(s)
}

/// Run `plan` on `g` in `precision`. Wide-side-first inputs are transposed
/// on the way in and out.
pub fn run(g: &Mat, plan: &IterationPlan, precision: Precision) -> Result<IterationResult> {
    if !g.is_finite() {
        return Err(SpecError::NonFinite);
    }
    if g.rows() > g.cols() {
        let mut res = run(&g.transpose(), plan, precision)?;
        res.output = res.output.transpose();
        return Ok(res);
    }
    match plan.scheme {
        Scheme::Direct => run_direct(g, plan, precision),
        Scheme::MAccumulator => run_m_accumulator(g, plan, precision),
        Scheme::Coupled => run_coupled(g, plan, precision),
        Scheme::CoupledAb => run_coupled_ab(g, plan, precision),
        Scheme::DualAb => run_dual_ab(g, plan, precision),
        Scheme::CoupledDual => run_coupled_dual(g, plan, precision),
        Scheme::RationalChol => run_rational_chol(g, plan, precision),
        Scheme::CoupledChol => run_coupled_chol(g, plan, precision),
    }
}

/// Shared prologue: shape check, `ν`, normalised input in the run precision.
pub(crate) fn normalise(g: &Mat, plan: &IterationPlan, eng: &Engine) -> Result<(Mat, f64)> {
    if g.rows() > g.cols() {
        return Err(SpecError::Shape(format!(
            "short side first expected, got {}x{} (use iterations::run)",
            g.rows(),
            g.cols()
        )));
    }
    let nu = g.frob_norm() + plan.epsilon;
    if nu == 0.0 {
        return Err(SpecError::ZeroGradient);
    }
    Ok((eng.ew(g.scale(1.0 / nu)), nu))
}

/// Shared epilogue: rescale by `ν^{1−2a/b}` and mark divergence.
pub(crate) fn finish(
    out: Option<Mat>,
    shape: (usize, usize),
    nu: f64,
    plan: &IterationPlan,
    eng: Engine,
    l0_factor: Option<Mat>,
    k: Option<u32>,
) -> IterationResult {
    let c = plan.a as f64 / plan.b as f64;
    let scale = nu.powf(1.0 - 2.0 * c);
    let output = out.map(|o| eng.ew(o.scale(scale)));
    let (output, diverged) = match output {
        Some(o) if o.is_finite() => (o, false),
        _ => (Mat::from_fn(shape.0, shape.1, |_, _| f64::NAN), true),
    };
    IterationResult { output, ledger: eng.ledger, l0_factor, nu, diverged, k }
}

/// `P(A) = Σ cⱼ Aʲ`, spending one square product per power beyond the first.
pub(crate) fn poly_of(eng: &mut Engine, coeffs: &[f64], a: &Mat) -> Mat {
    let n = a.rows();
    let mut acc = Mat::eye(n).scale(coeffs[0]);
    if coeffs.len() > 1 {
        acc = acc.add(&a.scale(coeffs[1]));
    }
    let mut pow = a.clone();
    for &c in coeffs.iter().skip(2) {
        pow = eng.smm(&pow, a);
        acc = acc.add(&pow.scale(c));
    }
    eng.ew(acc)
}

pub(crate) fn poly_schedule(plan: &IterationPlan) -> Result<&PolySchedule> {
    match &plan.schedule {
        Schedule::Poly(s) if s.steps.len() >= plan.steps => {
            if s.k != plan.poly_k() {
                return Err(SpecError::InvalidSchedule(format!(
                    "schedule power {} does not match plan power {}",
                    s.k,
                    plan.poly_k()
                )));
            }
            Ok(s)
        }
        Schedule::Poly(s) => {
            Err(SpecError::InvalidSchedule(format!("{} steps scheduled, {} requested", s.steps.len(), plan.steps)))
        }
        Schedule::Rational(_) => {
            Err(SpecError::InvalidSchedule(format!("{} needs a polynomial schedule", plan.scheme)))
        }
    }
}

pub(crate) fn rational_schedule(plan: &IterationPlan) -> Result<&FitSchedule> {
    match &plan.schedule {
        Schedule::Rational(s) => {
            s.validate()?;
            if s.b != plan.working_pair().1 {
                return Err(SpecError::InvalidSchedule(format!(
                    "schedule b = {} does not match working b = {}",
                    s.b,
                    plan.working_pair().1
                )));
            }
            if s.steps.len() < plan.steps {
                return Err(SpecError::InvalidSchedule(format!(
                    "{} steps scheduled, {} requested",
                    s.steps.len(),
                    plan.steps
                )));
            }
            Ok(s)
        }
        Schedule::Poly(_) => Err(SpecError::InvalidSchedule(format!("{} needs a rational schedule", plan.scheme))),
    }
}
