//! Update directions (Muon, Kaon, Freon, truncated SGD, SGD), mean-Schatten
//! normalization and the heavy-ball step.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpecError};
use crate::iterations::{self, IterationPlan, Scheme};
use crate::linalg::{singular_values, svd_oracle, Mat, Precision};
use crate::remez::{self, PolySchedule};

/// Kaon map parameter.
pub const KAON_LAMBDA: f64 = 4.1;
/// Kaon output divisor.
pub const KAON_DIVISOR: f64 = 1.175;
/// Lower end of the default Muon schedule.
pub const MUON_L0: f64 = 1e-3;
pub const MUON_STEPS: usize = 5;

#[derive(Clone, Debug)]
pub struct UpdateDirection {
    pub d: Mat,
    /// `⟨G, D⟩` for the input gradient.
    pub dual_scale: f64,
    pub meta: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SgdNorm {
    #[default]
    Spectral,
    Frobenius,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TruncationNorm {
    #[default]
    Frobenius,
    Spectral,
}

/// Which direction a step uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DirectionKind {
    Muon { steps: usize },
    Kaon { steps: usize },
    Freon { a: u32, b: u32, steps: usize, scheme: Scheme },
    FreonC1 { steps: usize },
    Tsgd { p_frac: f64, norm: TruncationNorm },
    Sgd { norm: SgdNorm },
}

/// How the direction is scaled inside a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StepForm {
    /// `W ← W − lr·⟨B, D⟩·D`.
    #[default]
    Preconditioned,
    /// `W ← W − lr·D`.
    Lmo,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentumState {
    pub buffer: Mat,
    pub beta: f64,
}

impl MomentumState {
    pub fn new(rows: usize, cols: usize, beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(SpecError::Config { path: "beta".into(), msg: format!("{beta} not in [0, 1)") });
        }
        Ok(Self { buffer: Mat::zeros(rows, cols), beta })
    }
}

fn check_gradient(g: &Mat) -> Result<f64> {
    if !g.is_finite() {
        return Err(SpecError::NonFinite);
    }
    let nrm = g.frob_norm();
    if nrm == 0.0 {
        return Err(SpecError::ZeroGradient);
    }
    Ok(nrm)
}

fn with_short_side(g: &Mat, f: impl FnOnce(&Mat) -> Result<Mat>) -> Result<Mat> {
    if g.rows() > g.cols() {
        Ok(f(&g.transpose())?.transpose())
    } else {
        f(g)
    }
}

/// Default Muon schedule: five degree-5 steps from `MUON_L0`, fitted once.
pub fn default_muon_schedule() -> &'static PolySchedule {
    static SCHEDULE: OnceLock<PolySchedule> = OnceLock::new();
    SCHEDULE.get_or_init(|| remez::muon_schedule(MUON_L0, MUON_STEPS).expect("muon schedule fits"))
}

pub fn muon_direction(g: &Mat, schedule: &PolySchedule) -> Result<UpdateDirection> {
    let nrm = check_gradient(g)?;
    if schedule.k != 2 {
        return Err(SpecError::InvalidSchedule(format!("muon needs k = 2, got {}", schedule.k)));
    }
    let d = with_short_side(g, |g| {
        let mut x = g.scale(1.0 / nrm);
        for step in &schedule.steps {
            let c = &step.coeffs;
            let a = x.gram();
            let mut bmat = a.scale(c.get(1).copied().unwrap_or(0.0));
            if let Some(&c2) = c.get(2) {
                bmat = bmat.add(&a.matmul(&a).scale(c2));
            }
            x = x.scale(c[0]).add(&bmat.matmul(&x));
        }
        Ok(x)
    })?;
    Ok(UpdateDirection { dual_scale: g.dot(&d), d, meta: format!("muon steps={}", schedule.steps.len()) })
}

pub fn kaon_direction(g: &Mat, steps: usize) -> Result<UpdateDirection> {
    kaon_direction_with(g, steps, KAON_LAMBDA, KAON_DIVISOR)
}

/// `X ← λ(I − XXᵀ)²X` from `X₀ = G/‖G‖_F`, returned divided by `divisor`.
pub fn kaon_direction_with(g: &Mat, steps: usize, lambda: f64, divisor: f64) -> Result<UpdateDirection> {
    let nrm = check_gradient(g)?;
    let d = with_short_side(g, |g| {
        let mut x = g.scale(1.0 / nrm);
        let n = x.rows();
        for _ in 0..steps {
            let resid = Mat::eye(n).sub(&x.gram());
            let bmat = resid.matmul(&resid);
            x = bmat.matmul(&x).scale(lambda);
        }
        Ok(x.scale(1.0 / divisor))
    })?;
    Ok(UpdateDirection { dual_scale: g.dot(&d), d, meta: format!("kaon steps={steps} lambda={lambda}") })
}

/// Freon direction `X_T/μ` with `μ = (⟨X_T, G⟩/n)^{(a+2b)/(2a−2b)}`.
pub fn freon_direction(g: &Mat, a: u32, b: u32, steps: usize, scheme: Scheme) -> Result<UpdateDirection> {
    let nrm = check_gradient(g)?;
    if a == b {
        return Err(SpecError::InvalidPlan("a = b has no μ exponent; use freon_c1_direction".into()));
    }
    let n = g.rows().min(g.cols()) as f64;
    if a == 0 {
        let d = g.scale(1.0 / nrm);
        return Ok(UpdateDirection { dual_scale: g.dot(&d), d, meta: "freon a=0".into() });
    }
    let plan = IterationPlan::new(a, b, scheme, steps)?;
    let res = iterations::run(&g.scale(1.0 / nrm), &plan, Precision::F64)?;
    if res.diverged {
        return Err(SpecError::NonFinite);
    }
    let x = res.output;
    let inner = x.dot(g);
    if !(inner > 0.0) {
        return Err(SpecError::InvalidInnerProduct(inner));
    }
    let (af, bf) = (a as f64, b as f64);
    let mu = (inner / n).powf((af + 2.0 * bf) / (2.0 * af - 2.0 * bf));
    let d = x.scale(1.0 / mu);
    if 2 * a == b {
        let top = singular_values(&d)?.first().copied().unwrap_or(0.0);
        if (top - 1.0).abs() > 0.05 {
            log::warn!("freon a/b=1/2: rescaled direction has spectral norm {top:.4}, expected about 1");
        }
    }
    Ok(UpdateDirection { dual_scale: g.dot(&d), d, meta: format!("freon a={a} b={b} scheme={scheme} steps={steps}") })
}

/// `(GGᵀ)⁻¹G` times the geometric mean of the singular values, with the
/// determinant read off the initial factor of the coupled Cholesky run.
pub fn freon_c1_direction(g: &Mat, steps: usize) -> Result<UpdateDirection> {
    check_gradient(g)?;
    let k = g.rows().min(g.cols());
    let plan = IterationPlan::new(1, 1, Scheme::CoupledChol, steps)?;
    let mut res = iterations::run(g, &plan, Precision::F64)?;
    let degenerate = |r: &iterations::IterationResult| {
        r.diverged || r.l0_factor.as_ref().is_none_or(|l| l.diag().iter().any(|&x| x.abs() == 0.0))
    };
    if degenerate(&res) {
        let reg = plan.clone().with_epsilon(IterationPlan::auto_epsilon(Precision::F64));
        res = iterations::run(g, &reg, Precision::F64)?;
        if res.diverged {
            return Err(SpecError::NonFinite);
        }
    }
    let l0 = res.l0_factor.as_ref().ok_or(SpecError::InvalidPlan("missing initial factor".into()))?;
    // log det(GGᵀ) = 2Σ log|L₀ᵢᵢ| + 2k log ν.
    let logdet = 2.0 * l0.diag().iter().map(|x| x.abs().ln()).sum::<f64>() + 2.0 * k as f64 * res.nu.ln();
    let geo_mean = (logdet / (2.0 * k as f64)).exp();
    let d = res.output.scale(geo_mean);
    Ok(UpdateDirection { dual_scale: g.dot(&d), d, meta: format!("freon-c1 steps={steps}") })
}

pub fn truncated_sgd_direction(g: &Mat, p_frac: f64, norm: TruncationNorm) -> Result<UpdateDirection> {
    let nrm = check_gradient(g)?;
    if !(0.0..1.0).contains(&p_frac) {
        return Err(SpecError::Config { path: "p_frac".into(), msg: format!("{p_frac} not in [0, 1)") });
    }
    if p_frac == 0.0 {
        return Ok(UpdateDirection { dual_scale: g.dot(g), d: g.clone(), meta: "tsgd p=0".into() });
    }
    let svd = svd_oracle(g)?;
    let r = svd.s.len();
    let drop = ((p_frac * r as f64).ceil() as usize).min(r);
    let mut kept = svd.clone();
    for s in kept.s.iter_mut().take(drop) {
        *s = 0.0;
    }
    let remaining_top = kept.s.iter().copied().fold(0.0_f64, f64::max);
    let remaining_frob = kept.s.iter().map(|s| s * s).sum::<f64>().sqrt();
    if remaining_top == 0.0 {
        return Err(SpecError::FullyTruncated);
    }
    let scale = match norm {
        TruncationNorm::Frobenius => nrm / remaining_frob,
        TruncationNorm::Spectral => svd.s[0] / remaining_top,
    };
    let d = kept.reconstruct().scale(scale);
    Ok(UpdateDirection { dual_scale: g.dot(&d), d, meta: format!("tsgd p={p_frac} dropped={drop}") })
}

pub fn sgd_direction(g: &Mat, norm: SgdNorm) -> Result<UpdateDirection> {
    let nrm = check_gradient(g)?;
    let div = match norm {
        SgdNorm::Spectral => singular_values(g)?[0],
        SgdNorm::Frobenius => nrm,
    };
    let d = g.scale(1.0 / div);
    Ok(UpdateDirection { dual_scale: g.dot(&d), d, meta: format!("sgd {norm:?}").to_lowercase() })
}

/// Factor that brings `spectrum` to unit mean Schatten-`p` norm,
/// `‖D‖_p = r^{1/p}`; `p = ∞` normalizes by the largest value.
pub fn mean_schatten_factor(spectrum: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(SpecError::Config { path: "p".into(), msg: format!("{p} must be positive") });
    }
    let r = spectrum.len() as f64;
    let top = spectrum.iter().fold(0.0_f64, |m, &s| m.max(s.abs()));
    if top == 0.0 {
        return Err(SpecError::ZeroGradient);
    }
    if p.is_infinite() {
        return Ok(1.0 / top);
    }
    // Factor out the top value to keep large p finite.
    let mean = spectrum.iter().map(|&s| (s.abs() / top).powf(p)).sum::<f64>() / r;
    Ok(1.0 / (top * mean.powf(1.0 / p)))
}

pub fn mean_schatten_normalize(d: &Mat, p: f64) -> Result<Mat> {
    let s = singular_values(d)?;
    Ok(d.scale(mean_schatten_factor(&s, p)?))
}

pub fn direction(g: &Mat, kind: &DirectionKind) -> Result<UpdateDirection> {
    match *kind {
        DirectionKind::Muon { steps } => {
            if steps == MUON_STEPS {
                muon_direction(g, default_muon_schedule())
            } else {
                muon_direction(g, &remez::muon_schedule(MUON_L0, steps)?)
            }
        }
        DirectionKind::Kaon { steps } => kaon_direction(g, steps),
        DirectionKind::Freon { a, b, steps, scheme } => freon_direction(g, a, b, steps, scheme),
        DirectionKind::FreonC1 { steps } => freon_c1_direction(g, steps),
        DirectionKind::Tsgd { p_frac, norm } => truncated_sgd_direction(g, p_frac, norm),
        DirectionKind::Sgd { norm } => sgd_direction(g, norm),
    }
}

/// Heavy-ball step: the buffer absorbs the raw gradient, the direction is
/// taken from the buffer.
pub fn step(
    weights: &Mat,
    state: &MomentumState,
    grad: &Mat,
    kind: &DirectionKind,
    lr: f64,
    form: StepForm,
) -> Result<(Mat, MomentumState)> {
    if grad.shape() != weights.shape() || state.buffer.shape() != weights.shape() {
        return Err(SpecError::Shape(format!(
            "weights {:?}, grad {:?}, buffer {:?}",
            weights.shape(),
            grad.shape(),
            state.buffer.shape()
        )));
    }
    let buffer = state.buffer.scale(state.beta).add(grad);
    let next = MomentumState { buffer, beta: state.beta };
    if lr == 0.0 {
        return Ok((weights.clone(), next));
    }
    let dir = direction(&next.buffer, kind)?;
    let scale = match form {
        StepForm::Preconditioned => next.buffer.dot(&dir.d),
        StepForm::Lmo => 1.0,
    };
    Ok((weights.sub(&dir.d.scale(lr * scale)), next))
}
