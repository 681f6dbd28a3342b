//! Polynomial schemes. Each step applies `y ↦ y·P(yᵏ)` to the scalar variable
//! of every singular value.

use crate::error::Result;
use crate::linalg::qr::upper_tri_inverse;
use crate::linalg::{Engine, Mat, Precision};

use super::{finish, frozen_exponent, normalise, poly_of, poly_schedule, IterationPlan, IterationResult};

fn all_finite(ms: &[&Mat]) -> bool {
    ms.iter().all(|m| m.is_finite())
}

/// Frozen Gram factor `(GGᵀ)^e` of the direct scheme; negative `e` goes
/// through a QR of `Gᵀ` and a triangular inverse.
fn frozen_factor(eng: &mut Engine, g: &Mat, e: i64) -> Result<Option<Mat>> {
    if e > 0 {
        let gram = eng.gmm_nt(g, g);
        return Ok(Some(eng.power(&gram, e as u32)?));
    }
    let (_, r) = eng.qr(&g.transpose())?;
    let rinv = match upper_tri_inverse(&r) {
        Ok(m) => eng.ew(m),
        Err(_) => return Ok(None),
    };
    let inv_gram = eng.smm_nt(&rinv, &rinv);
    Ok(Some(eng.power(&inv_gram, (-e) as u32)?))
}

pub fn run_direct(g: &Mat, plan: &IterationPlan, precision: Precision) -> Result<IterationResult> {
    let mut eng = Engine::new(precision);
    let (gn, nu) = normalise(g, plan, &eng)?;
    let sched = poly_schedule(plan)?;
    let k = plan.poly_k();
    let (a, b) = (plan.a, plan.b);
    let half = 2 * a == b;
    let unit = a == b;
    let frozen = if half || unit {
        None
    } else {
        match frozen_factor(&mut eng, &gn, frozen_exponent(a, b, k))? {
            Some(f) => Some(f),
            None => return Ok(finish(None, g.shape(), nu, plan, eng, None, Some(k))),
        }
    };
    let mut o = gn.clone();
    let mut ok = true;
    for step in sched.steps.iter().take(plan.steps) {
        let arg = if unit {
            eng.gmm_nt(&o, &gn)
        } else {
            let oo = eng.gmm_nt(&o, &o);
            let p = eng.power(&oo, k / 2)?;
            match &frozen {
                Some(f) => eng.smm(&p, f),
                None => p,
            }
        };
        let p = poly_of(&mut eng, &step.coeffs, &arg);
        o = eng.gmm(&p, &o);
        if !all_finite(&[&o]) {
            ok = false;
            break;
        }
    }
    Ok(finish(ok.then_some(o), g.shape(), nu, plan, eng, None, Some(k)))
}

pub fn run_m_accumulator(g: &Mat, plan: &IterationPlan, precision: Precision) -> Result<IterationResult> {
    let mut eng = Engine::new(precision);
    let (gn, nu) = normalise(g, plan, &eng)?;
    let sched = poly_schedule(plan)?;
    let k = plan.poly_k();
    let gram = eng.gmm_nt(&gn, &gn);
    let frozen = eng.power(&gram, k * plan.a / plan.b)?;
    let mut m = Mat::eye(gn.rows());
    let mut ok = true;
    for step in sched.steps.iter().take(plan.steps) {
        let mk = eng.power(&m, k)?;
        let arg = eng.smm(&mk, &frozen);
        let p = poly_of(&mut eng, &step.coeffs, &arg);
        m = eng.smm(&p, &m);
        if !all_finite(&[&m]) {
            ok = false;
            break;
        }
    }
    let out = if ok { Some(eng.gmm(&m, &gn)) } else { None };
    Ok(finish(out, g.shape(), nu, plan, eng, None, Some(k)))
}

pub fn run_coupled(g: &Mat, plan: &IterationPlan, precision: Precision) -> Result<IterationResult> {
    let mut eng = Engine::new(precision);
    let (gn, nu) = normalise(g, plan, &eng)?;
    let sched = poly_schedule(plan)?;
    let k = plan.poly_k();
    let gram = eng.gmm_nt(&gn, &gn);
    let mut arg = eng.power(&gram, k * plan.a / plan.b)?;
    let mut o = gn;
    let mut ok = true;
    for step in sched.steps.iter().take(plan.steps) {
        let p = poly_of(&mut eng, &step.coeffs, &arg);
        o = eng.gmm(&p, &o);
        let pk = eng.power(&p, k)?;
        arg = eng.smm(&pk, &arg);
        if !all_finite(&[&o, &arg]) {
            ok = false;
            break;
        }
    }
    Ok(finish(ok.then_some(o), g.shape(), nu, plan, eng, None, Some(k)))
}

pub fn run_coupled_ab(g: &Mat, plan: &IterationPlan, precision: Precision) -> Result<IterationResult> {
    let mut eng = Engine::new(precision);
    let (gn, nu) = normalise(g, plan, &eng)?;
    let sched = poly_schedule(plan)?;
    let (a, b) = (plan.a, plan.b);
    let mut y = eng.gmm_nt(&gn, &gn);
    let mut o = gn;
    let mut ok = true;
    for step in sched.steps.iter().take(plan.steps) {
        let p = poly_of(&mut eng, &step.coeffs, &y);
        let pa = eng.power(&p, a)?;
        o = eng.gmm(&pa, &o);
        let pb = eng.power(&p, b)?;
        y = eng.smm(&pb, &y);
        if !all_finite(&[&o, &y]) {
            ok = false;
            break;
        }
    }
    Ok(finish(ok.then_some(o), g.shape(), nu, plan, eng, None, Some(b)))
}

pub fn run_dual_ab(g: &Mat, plan: &IterationPlan, precision: Precision) -> Result<IterationResult> {
    let mut eng = Engine::new(precision);
    let (gn, nu) = normalise(g, plan, &eng)?;
    let sched = poly_schedule(plan)?;
    let (a, b) = (plan.a, plan.b);
    let mut y = gn.transpose();
    let mut o = gn;
    // Product of the balancing factors applied to O, undone at the end.
    let mut drift = 1.0;
    let mut ok = true;
    for step in sched.steps.iter().take(plan.steps) {
        let balance = eng.scalar((y.frob_norm() / o.frob_norm()).sqrt());
        drift *= balance;
        o = eng.ew(o.scale(balance));
        y = eng.ew(y.scale(1.0 / balance));
        let prod = eng.gmm(&o, &y);
        let r = poly_of(&mut eng, &step.coeffs, &prod);
        let ra = eng.power(&r, a)?;
        o = eng.gmm(&ra, &o);
        if b > a {
            let rd = eng.power(&r, b - a)?;
            y = eng.gmm(&y, &rd);
        }
        if !all_finite(&[&o, &y]) {
            ok = false;
            break;
        }
    }
    let out = ok.then(|| eng.ew(o.scale(1.0 / drift)));
    Ok(finish(out, g.shape(), nu, plan, eng, None, Some(b)))
}

pub fn run_coupled_dual(g: &Mat, plan: &IterationPlan, precision: Precision) -> Result<IterationResult> {
    let mut eng = Engine::new(precision);
    let (gn, nu) = normalise(g, plan, &eng)?;
    let sched = poly_schedule(plan)?;
    let k = plan.poly_k();
    let (a, b) = (plan.a, plan.b);
    let gamma = plan.stabilizer_gamma;
    let gram = eng.gmm_nt(&gn, &gn);
    let mut arg_a = eng.power(&gram, k * a / b)?;
    let mut arg_b = eng.power(&gram, k * (b - a) / b)?;
    let mut y = gn.transpose();
    let mut o = gn;
    let n = o.rows();
    let mut ok = true;
    for step in sched.steps.iter().take(plan.steps) {
        let ra = poly_of(&mut eng, &step.coeffs, &arg_a);
        let rb = poly_of(&mut eng, &step.coeffs, &arg_b);
        let oy = eng.gmm(&o, &y);
        let e = eng.ew(Mat::eye(n).sub(&oy).scale(gamma));
        o = eng.gmm(&eng.ew(ra.add(&e)), &o);
        y = eng.gmm(&y, &eng.ew(rb.add(&e)));
        let rak = eng.power(&ra, k)?;
        arg_a = eng.smm(&rak, &arg_a);
        let rbk = eng.power(&rb, k)?;
        arg_b = eng.smm(&rbk, &arg_b);
        if !all_finite(&[&o, &y, &arg_a, &arg_b]) {
            ok = false;
            break;
        }
    }
    Ok(finish(ok.then_some(o), g.shape(), nu, plan, eng, None, Some(k)))
}
