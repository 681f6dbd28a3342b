//! Rational schemes driven by QR factorizations of stacked blocks.

use crate::error::{Result, SpecError};
use crate::linalg::{Engine, Mat, Precision};
use crate::remez::RationalStep;

use super::{finish, normalise, rational_schedule, IterationPlan, IterationResult};

/// Factor `L₀` with `L₀L₀ᵀ = GGᵀ + εI` from a QR of `[Gᵀ; √ε I]`.
fn initial_factor(eng: &mut Engine, g: &Mat, epsilon: f64) -> Result<Mat> {
    let mut stacked = g.transpose();
    if epsilon > 0.0 {
        stacked = stacked.vstack(&Mat::eye(g.rows()).scale(epsilon.sqrt()));
    }
    let (_, r) = eng.qr(&stacked)?;
    Ok(r.transpose())
}

/// `(I + γYYᵀ)⁻¹` from a QR of a stacked block; the branch keeps the
/// stacked entries of order one.
fn resolvent(eng: &mut Engine, y: &Mat, gamma: f64) -> Result<Mat> {
    let n = y.rows();
    let stacked = if gamma <= 1.0 {
        eng.ew(y.transpose().scale(gamma.sqrt())).vstack(&Mat::eye(n))
    } else {
        y.transpose().vstack(&eng.ew(Mat::eye(n).scale(1.0 / gamma.sqrt())))
    };
    let (q, _) = eng.qr(&stacked)?;
    let q2 = q.row_block(n, 2 * n);
    Ok(eng.smm_nt(&q2, &q2))
}

/// `R(X) = ρI + (α − ρ)(I + γX)⁻¹` given the resolvent, `ρ = β/γ`.
fn rational_weight(eng: &Engine, step: &RationalStep, v: &Mat) -> Mat {
    let rho = step.beta / step.gamma;
    eng.ew(v.scale(step.alpha - rho).add_identity(rho)).symmetrize()
}

fn qr_diverged(e: &SpecError) -> bool {
    matches!(e, SpecError::NonFinite)
}

pub fn run_rational_chol(g: &Mat, plan: &IterationPlan, precision: Precision) -> Result<IterationResult> {
    let mut eng = Engine::new(precision);
    let (gn, nu) = normalise(g, plan, &eng)?;
    let sched = rational_schedule(plan)?;
    let (aw, bw) = plan.working_pair();
    let r = bw / 2;
    let l = initial_factor(&mut eng, &gn, plan.epsilon)?;
    let mut m = Mat::eye(gn.rows());
    let mut ok = true;
    for step in sched.steps.iter().take(plan.steps) {
        let mr = eng.power(&m, r)?;
        let y = eng.smm(&mr, &l);
        if !y.is_finite() {
            ok = false;
            break;
        }
        let v = match resolvent(&mut eng, &y, step.gamma) {
            Ok(v) => v,
            Err(e) if qr_diverged(&e) => {
                ok = false;
                break;
            }
            Err(e) => return Err(e),
        };
        let rho = step.beta / step.gamma;
        let vm = eng.smm(&v, &m);
        m = eng.ew(m.scale(rho).add(&vm.scale(step.alpha - rho)));
    }
    let out = if ok && m.is_finite() {
        let ma = eng.power(&m, aw)?;
        Some(eng.gmm(&ma, &gn))
    } else {
        None
    };
    Ok(finish(out, g.shape(), nu, plan, eng, Some(l), None))
}

pub fn run_coupled_chol(g: &Mat, plan: &IterationPlan, precision: Precision) -> Result<IterationResult> {
    let mut eng = Engine::new(precision);
    let (gn, nu) = normalise(g, plan, &eng)?;
    let sched = rational_schedule(plan)?;
    let (aw, bw) = plan.working_pair();
    let r = bw / 2;
    let l0 = initial_factor(&mut eng, &gn, plan.epsilon)?;
    let mut l = l0.clone();
    let mut c = Mat::eye(gn.rows());
    let mut ok = true;
    for step in sched.steps.iter().take(plan.steps) {
        let v = match resolvent(&mut eng, &l, step.gamma) {
            Ok(v) => v,
            Err(e) if qr_diverged(&e) => {
                ok = false;
                break;
            }
            Err(e) => return Err(e),
        };
        let w = rational_weight(&eng, step, &v);
        let wr = eng.power(&w, r)?;
        l = eng.smm(&wr, &l);
        c = eng.smm(&w, &c);
        if !l.is_finite() || !c.is_finite() {
            ok = false;
            break;
        }
    }
    let out = if ok {
        let ca = eng.power(&c, aw)?;
        Some(eng.gmm(&ca, &gn))
    } else {
        None
    };
    Ok(finish(out, g.shape(), nu, plan, eng, Some(l0), None))
}
