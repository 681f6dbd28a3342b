//! Minimax coefficient fitting for the rational and polynomial steps.
//!
//! A rational step acts on a singular-value-like variable `y` as
//! `R̃(y) = y(α + βyᵇ)/(1 + γyᵇ)`; a polynomial step as `y·P(yᵏ)`. Each step is
//! fitted so that `max |1 − step(y)|` over its interval is minimal.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpecError};

/// Bound on the pole parameter of every scheduled rational step.
pub const GAMMA_BOUND: f64 = 1e5;
const MAX_EXCHANGES: usize = 200;
const GRID_POINTS: usize = 100_000;
/// Intervals narrower than this use the third-order contact limit at 1.
const NARROW_WIDTH: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RationalStep {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub l: f64,
    pub u: f64,
    pub level: f64,
}

impl RationalStep {
    /// `R(x) = (α + βx)/(1 + γx)` on the Gram variable.
    #[inline]
    pub fn gram(&self, x: f64) -> f64 {
        (self.alpha + self.beta * x) / (1.0 + self.gamma * x)
    }

    /// `R̃(y) = y·R(yᵇ)`.
    #[inline]
    pub fn eval(&self, y: f64, b: u32) -> f64 {
        y * self.gram(y.powi(b as i32))
    }

    fn deriv_sign_fn(&self, b: u32) -> impl Fn(f64) -> f64 + '_ {
        move |y: f64| {
            let z = y.powi(b as i32);
            let bf = b as f64;
            let n = self.alpha + self.beta * z;
            let dn = self.alpha + (bf + 1.0) * self.beta * z;
            let d = 1.0 + self.gamma * z;
            let dd = bf * self.gamma * z;
            dn * d - n * dd
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyStep {
    /// Coefficients of `P(z) = Σ cⱼ zʲ`.
    pub coeffs: Vec<f64>,
    /// Power of the inner variable, `z = yᵏ`.
    pub k: u32,
    pub l: f64,
    pub u: f64,
    pub level: f64,
}

impl PolyStep {
    #[inline]
    pub fn eval_p(&self, z: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * z + c)
    }

    /// `y·P(yᵏ)`.
    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        y * self.eval_p(y.powi(self.k as i32))
    }

    fn deriv(&self, y: f64) -> f64 {
        let z = y.powi(self.k as i32);
        let kf = self.k as f64;
        self.coeffs.iter().enumerate().rev().fold(0.0, |acc, (j, &c)| acc * z + c * (1.0 + j as f64 * kf))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSchedule {
    pub b: u32,
    pub l0: f64,
    pub cushion: f64,
    pub steps: Vec<RationalStep>,
}

impl FitSchedule {
    /// Composition of the first `t` steps at `y`.
    pub fn compose(&self, y: f64, t: usize) -> f64 {
        self.steps.iter().take(t).fold(y, |acc, s| s.eval(acc, self.b))
    }

    pub fn max_gamma(&self) -> f64 {
        self.steps.iter().fold(0.0, |m, s| m.max(s.gamma.abs()))
    }

    /// Lower end of the interval after all steps.
    pub fn final_l(&self) -> f64 {
        self.steps.last().map_or(self.l0, |s| s.eval(s.l, self.b))
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || !self.b.is_multiple_of(2) {
            return Err(SpecError::InvalidSchedule(format!("b = {} is not even", self.b)));
        }
        for (t, s) in self.steps.iter().enumerate() {
            if !(s.gamma > 0.0) || !s.alpha.is_finite() || !s.beta.is_finite() {
                return Err(SpecError::InvalidSchedule(format!("step {t}: gamma = {}", s.gamma)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolySchedule {
    pub k: u32,
    pub l0: f64,
    pub steps: Vec<PolyStep>,
}

impl PolySchedule {
    pub fn compose(&self, y: f64, t: usize) -> f64 {
        self.steps.iter().take(t).fold(y, |acc, s| s.eval(acc))
    }
}

/// `(1.84e−8)^{1/b}`.
pub fn cushion_for(b: u32) -> f64 {
    1.84e-8_f64.powf(1.0 / b as f64)
}

/// `(1e−11)^{2/b}`.
pub fn lower_bound_for(b: u32) -> f64 {
    1e-11_f64.powf(2.0 / b as f64)
}

/// Rational step whose error `1 − R̃` has a triple zero at `y = 1`, the limit of
/// the minimax step as the interval shrinks to a point.
pub fn contact_step(b: u32) -> (f64, f64, f64) {
    let s = 1.0 / b as f64;
    let gamma = (s + 1.0) / (1.0 - s);
    let beta = gamma - s * (1.0 + gamma);
    let alpha = 1.0 + gamma - beta;
    (alpha, beta, gamma)
}

/// Minimax rational step on `[l, u]`.
pub fn fit_rational_step(l: f64, u: f64, b: u32) -> Result<RationalStep> {
    check_interval(l, u)?;
    if b == 0 || !b.is_multiple_of(2) {
        return Err(SpecError::InvalidSchedule(format!("b = {b} must be even")));
    }
    if u - l < NARROW_WIDTH {
        let (alpha, beta, gamma) = contact_step(b);
        let mut step = RationalStep { alpha, beta, gamma, l, u, level: 0.0 };
        recenter_rational(&mut step, l, u, b);
        return Ok(step);
    }
    match remez_rational(l, u, b) {
        Ok(s) => Ok(s),
        Err(SpecError::DenominatorSign) => remez_rational_perturbed(l, u, b),
        Err(e) => Err(e),
    }
}

fn check_interval(l: f64, u: f64) -> Result<()> {
    if !(l > 0.0) || !(u >= l) || !u.is_finite() {
        return Err(SpecError::InvalidSchedule(format!("bad interval [{l}, {u}]")));
    }
    Ok(())
}

/// Scale the numerator so the errors at `l` and `u` are equal and opposite.
fn recenter_rational(step: &mut RationalStep, l: f64, u: f64, b: u32) {
    let s = 2.0 / (step.eval(l, b) + step.eval(u, b));
    step.alpha *= s;
    step.beta *= s;
    step.l = l;
    step.u = u;
    step.level = 1.0 - step.eval(l, b);
}

fn remez_rational(l: f64, u: f64, b: u32) -> Result<RationalStep> {
    let refs = initial_refs(l, u, 4, 1.0);
    remez_rational_from(l, u, b, refs)
}

fn remez_rational_perturbed(l: f64, u: f64, b: u32) -> Result<RationalStep> {
    let refs = initial_refs(l, u, 4, 0.7);
    remez_rational_from(l, u, b, refs)
}

fn remez_rational_from(l: f64, u: f64, b: u32, mut refs: Vec<f64>) -> Result<RationalStep> {
    let mut last_residual = f64::INFINITY;
    for _ in 0..MAX_EXCHANGES {
        let (alpha, beta, gamma, e) = solve_rational_refs(&refs, b)?;
        let step = RationalStep { alpha, beta, gamma, l, u, level: e.abs() };
        if 1.0 + gamma * l.powi(b as i32) <= 0.0 || 1.0 + gamma * u.powi(b as i32) <= 0.0 {
            return Err(SpecError::DenominatorSign);
        }
        let err = |y: f64| 1.0 - step.eval(y, b);
        let dsign = step.deriv_sign_fn(b);
        let interior = interior_extrema(l, u, &dsign);
        let new_refs = choose_refs(l, u, &interior, &err, 4);
        let max_err = new_refs.iter().map(|&y| err(y).abs()).fold(0.0, f64::max);
        last_residual = (max_err - e.abs()).abs();
        let moved = refs.iter().zip(&new_refs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        refs = new_refs;
        if moved <= 1e-12 * (u - l) || last_residual <= 1e-13 * max_err + 1e-15 {
            drop(dsign);
            let mut step = step;
            recenter_rational(&mut step, l, u, b);
            return Ok(step);
        }
    }
    Err(SpecError::RemezStalled { exchanges: MAX_EXCHANGES, residual: last_residual })
}

/// Solve `1 − R̃(yᵢ) = (−1)ⁱ E` at four references. The system is linear in
/// (α, β, γ) for fixed E and its solvability condition is quadratic in E.
fn solve_rational_refs(refs: &[f64], b: u32) -> Result<(f64, f64, f64, f64)> {
    let row = |i: usize, e: f64| -> [f64; 4] {
        let y = refs[i];
        let z = y.powi(b as i32);
        let s = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
        let w = 1.0 - s * e;
        [y, y * z, -w * z, -w]
    };
    let det_at = |e: f64| det4([row(0, e), row(1, e), row(2, e), row(3, e)]);
    let d0 = det_at(0.0);
    let dp = det_at(1.0);
    let dm = det_at(-1.0);
    let c2 = 0.5 * (dp + dm) - d0;
    let c1 = 0.5 * (dp - dm);
    let c0 = d0;
    let roots = quadratic_roots(c2, c1, c0);
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for e in roots {
        if !(e.abs() < 1.0) {
            continue;
        }
        // α, β, γ from the first three equations.
        let m = [row(0, e), row(1, e), row(2, e)];
        let a3 = [[m[0][0], m[0][1], m[0][2]], [m[1][0], m[1][1], m[1][2]], [m[2][0], m[2][1], m[2][2]]];
        let rhs = [-m[0][3], -m[1][3], -m[2][3]];
        if let Some([alpha, beta, gamma]) = solve3(a3, rhs) {
            let ok = refs.iter().all(|&y| 1.0 + gamma * y.powi(b as i32) > 0.0);
            if ok && best.is_none_or(|(_, _, _, be)| e.abs() < be.abs()) {
                best = Some((alpha, beta, gamma, e));
            }
        }
    }
    best.ok_or(SpecError::DenominatorSign)
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return vec![];
    }
    let (a, b, c) = (a / scale, b / scale, c / scale);
    if a.abs() < 1e-14 {
        return if b != 0.0 { vec![-c / b] } else { vec![] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut r = Vec::new();
    if q != 0.0 {
        r.push(q / a);
        r.push(c / q);
    } else {
        r.push(0.0);
    }
    r
}

fn det4(m: [[f64; 4]; 4]) -> f64 {
    // Gaussian elimination with partial pivoting.
    let mut a = m;
    let mut det = 1.0;
    for c in 0..4 {
        let p = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in (c + 1)..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let x = solve_dense(a.iter().map(|r| r.to_vec()).collect(), b.to_vec())?;
    Some([x[0], x[1], x[2]])
}

/// Dense solve with partial pivoting.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c] == 0.0 || !a[p][c].is_finite() {
            return None;
        }
        a.swap(p, c);
        b.swap(p, c);
        for r in (c + 1)..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Chebyshev-extrema references in the logarithmic coordinate of `[l, u]`,
/// optionally pulled toward `l` by `bias < 1`.
fn initial_refs(l: f64, u: f64, count: usize, bias: f64) -> Vec<f64> {
    let (ll, lu) = (l.ln(), u.ln());
    (0..count)
        .map(|i| {
            let t = 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / (count - 1) as f64).cos());
            let t = t.powf(1.0 / bias);
            if i == 0 {
                l
            } else if i == count - 1 {
                u
            } else {
                (ll + t * (lu - ll)).exp()
            }
        })
        .collect()
}

/// Evaluation grid on `[l, u]`: logarithmic when the interval spans more than
/// a factor 2, uniform otherwise.
pub fn dense_grid(l: f64, u: f64, n: usize) -> Vec<f64> {
    let log = u / l > 2.0;
    let (a, b) = if log { (l.ln(), u.ln()) } else { (l, u) };
    (0..n)
        .map(|i| {
            let x = a + (b - a) * i as f64 / (n - 1) as f64;
            let y = if log { x.exp() } else { x };
            y.clamp(l, u)
        })
        .collect()
}

/// Interior zeros of `dsign` (a function with the sign of the derivative of
/// the approximant), found on the dense grid and refined by bisection.
fn interior_extrema(l: f64, u: f64, dsign: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let grid = dense_grid(l, u, GRID_POINTS);
    let mut out = Vec::new();
    let mut prev_y = grid[0];
    let mut prev = dsign(prev_y);
    for &y in &grid[1..] {
        let cur = dsign(y);
        if prev != 0.0 && cur != 0.0 && (prev < 0.0) != (cur < 0.0) {
            out.push(bisect(prev_y, y, prev, dsign));
        }
        prev_y = y;
        prev = cur;
    }
    out
}

fn bisect(mut a: f64, mut b: f64, fa: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let sa = fa < 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == sa {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Endpoints plus interior extrema, reduced to `count` points with
/// alternating error signs and largest magnitudes.
fn choose_refs(l: f64, u: f64, interior: &[f64], err: &dyn Fn(f64) -> f64, count: usize) -> Vec<f64> {
    let mut cands: Vec<f64> = Vec::with_capacity(interior.len() + 2);
    cands.push(l);
    cands.extend(interior.iter().copied().filter(|&y| y > l && y < u));
    cands.push(u);
    // Merge runs of equal sign keeping the largest magnitude.
    let mut alt: Vec<f64> = Vec::new();
    for y in cands {
        let e = err(y);
        match alt.last() {
            Some(&p) if (err(p) < 0.0) == (e < 0.0) => {
                if e.abs() > err(p).abs() {
                    *alt.last_mut().unwrap() = y;
                }
            }
            _ => alt.push(y),
        }
    }
    while alt.len() > count {
        // Drop the smaller end, or merge the smallest interior pair.
        let first = err(alt[0]).abs();
        let last = err(*alt.last().unwrap()).abs();
        if first < last {
            alt.remove(0);
        } else {
            alt.pop();
        }
    }
    if alt.len() < 2 {
        return initial_refs(l, u, count, 1.0);
    }
    if alt.len() < count {
        // Pad by splitting the widest gap (keeps the exchange moving).
        while alt.len() < count {
            let (i, _) =
                alt.windows(2).enumerate().max_by(|(_, a), (_, b)| (a[1] / a[0]).total_cmp(&(b[1] / b[0]))).unwrap();
            let mid = (alt[i] * alt[i + 1]).sqrt();
            alt.insert(i + 1, mid);
        }
    }
    alt
}

/// Rational schedule: each step is fitted on `[max(lₜ, cushion), uₜ]` and then
/// rescaled so its error is balanced at the true `lₜ`; the interval recursion is
/// `lₜ₊₁ = R̃ₜ(lₜ)`, `uₜ₊₁ = 2 − R̃ₜ(lₜ)`.
pub fn fit_rational_schedule(l0: f64, steps: usize, b: u32, cushion: f64) -> Result<FitSchedule> {
    fit_schedule_inner(l0, steps, b, cushion, Some(GAMMA_BOUND))
}

/// Pure minimax schedule: no cushion floor and no pole bound.
pub fn fit_minimax_schedule(l0: f64, steps: usize, b: u32) -> Result<FitSchedule> {
    fit_schedule_inner(l0, steps, b, 0.0, None)
}

fn fit_schedule_inner(l0: f64, steps: usize, b: u32, cushion: f64, bound: Option<f64>) -> Result<FitSchedule> {
    if !(l0 > 0.0 && l0 <= 1.0) || steps == 0 {
        return Err(SpecError::InvalidSchedule(format!("l0 = {l0}, steps = {steps}")));
    }
    let mut l = l0;
    let mut u = 1.0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let fit_l = l.max(cushion).min(u);
        let mut step = fit_rational_step(fit_l, u, b)?;
        recenter_rational(&mut step, l, u, b);
        if let Some(bound) = bound {
            if !(step.gamma.abs() <= bound) {
                return Err(SpecError::CushionInsufficient { gamma: step.gamma, bound });
            }
        }
        let next = step.eval(l, b);
        out.push(step);
        l = next.min(1.0);
        u = (2.0 - next).max(1.0);
    }
    Ok(FitSchedule { b, l0, cushion, steps: out })
}

/// Schedule from `l0` with floor `cushion_for(b)`, raised by 5% at a time
/// until every pole parameter respects `GAMMA_BOUND`.
pub fn fit_with_default_cushion(l0: f64, steps: usize, b: u32) -> Result<FitSchedule> {
    let mut cushion = cushion_for(b);
    loop {
        match fit_rational_schedule(l0, steps, b, cushion) {
            Err(SpecError::CushionInsufficient { .. }) if cushion < 0.5 => cushion *= 1.05,
            other => return other,
        }
    }
}

/// Default rational schedule for exponent denominator `b` (even), starting
/// at `lower_bound_for(b)`.
pub fn default_rational_schedule(b: u32, steps: usize) -> Result<FitSchedule> {
    fit_with_default_cushion(lower_bound_for(b), steps, b)
}

/// Minimax `y·P(yᵏ)` on `[l, u]` with `n_terms` coefficients.
pub fn fit_poly_power_step(l: f64, u: f64, k: u32, n_terms: usize) -> Result<PolyStep> {
    check_interval(l, u)?;
    if n_terms == 0 || k == 0 {
        return Err(SpecError::InvalidSchedule("need k ≥ 1 and at least one term".into()));
    }
    if u - l < NARROW_WIDTH * 1e-3 || n_terms == 1 && u == l {
        // Degenerate interval: a polynomial with y·P(yᵏ) = 1 at y = 1 and
        // as many vanishing derivatives as the degree allows.
        let mut step = PolyStep { coeffs: contact_poly(k, n_terms), k, l, u, level: 0.0 };
        recenter_poly(&mut step, l, u);
        return Ok(step);
    }
    let count = n_terms + 1;
    let mut refs = initial_refs(l, u, count, 1.0);
    let mut last_residual = f64::INFINITY;
    for _ in 0..MAX_EXCHANGES {
        let mut a = Vec::with_capacity(count);
        let mut rhs = Vec::with_capacity(count);
        for (i, &y) in refs.iter().enumerate() {
            let z = y.powi(k as i32);
            let mut row: Vec<f64> = (0..n_terms).map(|j| y * z.powi(j as i32)).collect();
            row.push(if i % 2 == 0 { 1.0 } else { -1.0 });
            a.push(row);
            rhs.push(1.0);
        }
        let sol = solve_dense(a, rhs).ok_or(SpecError::RemezStalled { exchanges: 0, residual: f64::NAN })?;
        let e = sol[n_terms];
        let step = PolyStep { coeffs: sol[..n_terms].to_vec(), k, l, u, level: e.abs() };
        let err = |y: f64| 1.0 - step.eval(y);
        let dsign = |y: f64| step.deriv(y);
        let interior = interior_extrema(l, u, &dsign);
        let new_refs = choose_refs(l, u, &interior, &err, count);
        let max_err = new_refs.iter().map(|&y| err(y).abs()).fold(0.0, f64::max);
        last_residual = (max_err - e.abs()).abs();
        let moved = refs.iter().zip(&new_refs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        refs = new_refs;
        if moved <= 1e-12 * (u - l) || last_residual <= 1e-13 * max_err + 1e-15 {
            let mut step = step;
            recenter_poly(&mut step, l, u);
            return Ok(step);
        }
    }
    Err(SpecError::RemezStalled { exchanges: MAX_EXCHANGES, residual: last_residual })
}

/// Odd polynomial `y·P(y^{2r})`.
pub fn fit_poly_step(l: f64, u: f64, r: u32, n_terms: usize) -> Result<PolyStep> {
    fit_poly_power_step(l, u, 2 * r, n_terms)
}

fn recenter_poly(step: &mut PolyStep, l: f64, u: f64) {
    let s = 2.0 / (step.eval(l) + step.eval(u));
    for c in step.coeffs.iter_mut() {
        *c *= s;
    }
    step.l = l;
    step.u = u;
    step.level = 1.0 - step.eval(l);
}

/// Coefficients of `P` with `y·P(yᵏ) − 1` vanishing to the highest order at 1.
fn contact_poly(k: u32, n_terms: usize) -> Vec<f64> {
    // Conditions dᵐ/dyᵐ [y·P(yᵏ)] at y = 1 equal δₘ₀ for m < n_terms.
    let n = n_terms;
    let kf = k as f64;
    let mut a = vec![vec![0.0; n]; n];
    for (m, row) in a.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            // m-th derivative of y^{1 + jk} at 1 is the falling factorial.
            let p = 1.0 + j as f64 * kf;
            *cell = (0..m).fold(1.0, |acc, i| acc * (p - i as f64));
        }
    }
    let mut rhs = vec![0.0; n];
    rhs[0] = 1.0;
    solve_dense(a, rhs).unwrap_or_else(|| {
        let mut c = vec![0.0; n];
        c[0] = 1.0;
        c
    })
}

/// Polynomial schedule with the same interval recursion as the rational one.
pub fn fit_poly_schedule(l0: f64, steps: usize, k: u32, n_terms: usize) -> Result<PolySchedule> {
    if !(l0 > 0.0 && l0 <= 1.0) || steps == 0 {
        return Err(SpecError::InvalidSchedule(format!("l0 = {l0}, steps = {steps}")));
    }
    let mut l = l0;
    let mut u = 1.0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let step = fit_poly_power_step(l, u, k, n_terms)?;
        let next = step.eval(l);
        out.push(step);
        l = next.min(1.0);
        u = (2.0 - next).max(1.0);
    }
    Ok(PolySchedule { k, l0, steps: out })
}

/// Degree-5 odd schedule used by the default Muon direction.
pub fn muon_schedule(l0: f64, steps: usize) -> Result<PolySchedule> {
    fit_poly_schedule(l0, steps, 2, 3)
}

/// Extrema of `1 − f` on `[l, u]` (endpoints plus interior critical points of
/// `f`), scanned on the dense grid.
pub fn error_extrema(l: f64, u: f64, f: &dyn Fn(f64) -> f64) -> Vec<(f64, f64)> {
    let grid = dense_grid(l, u, GRID_POINTS);
    let vals: Vec<f64> = grid.iter().map(|&y| 1.0 - f(y)).collect();
    let mut out = vec![(grid[0], vals[0])];
    for i in 1..grid.len() - 1 {
        let (a, b, c) = (vals[i - 1], vals[i], vals[i + 1]);
        if (b > a && b >= c) || (b < a && b <= c) {
            // Golden-section refinement of the local extremum.
            let sign = if b > a { 1.0 } else { -1.0 };
            let y = refine_extremum(grid[i - 1], grid[i + 1], &|y| sign * (1.0 - f(y)));
            out.push((y, 1.0 - f(y)));
        }
    }
    out.push((grid[grid.len() - 1], vals[vals.len() - 1]));
    // Flat stretches yield several same-signed extrema; keep the largest.
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(out.len());
    for (y, e) in out {
        match merged.last_mut() {
            Some(last) if last.1.signum() == e.signum() || e == 0.0 => {
                if e.abs() > last.1.abs() {
                    *last = (y, e);
                }
            }
            _ => merged.push((y, e)),
        }
    }
    merged
}

fn refine_extremum(mut a: f64, mut b: f64, g: &dyn Fn(f64) -> f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    for _ in 0..100 {
        if g(c) > g(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - phi * (b - a);
        d = a + phi * (b - a);
        if (b - a).abs() <= 1e-16 * b.abs() {
            break;
        }
    }
    0.5 * (a + b)
}

/// Alternation summary of `1 − step` on `[l, u]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlternationReport {
    /// Length of the longest run of sign-alternating extrema.
    pub alternations: usize,
    /// Largest `|1 − step|` found on the dense grid.
    pub max_err: f64,
    /// `|level − (1 − step(l))|`.
    pub level_gap: f64,
}

pub fn rational_alternation(step: &RationalStep, b: u32) -> AlternationReport {
    alternation_of(step.l, step.u, step.level, &|y| step.eval(y, b))
}

pub fn poly_alternation(step: &PolyStep) -> AlternationReport {
    alternation_of(step.l, step.u, step.level, &|y| step.eval(y))
}

fn alternation_of(l: f64, u: f64, level: f64, f: &dyn Fn(f64) -> f64) -> AlternationReport {
    let level_gap = (level - (1.0 - f(l))).abs();
    if u <= l {
        return AlternationReport { alternations: 1, max_err: (1.0 - f(l)).abs(), level_gap };
    }
    let ext = error_extrema(l, u, f);
    let max_err = ext.iter().fold(0.0_f64, |m, &(_, e)| m.max(e.abs()));
    AlternationReport { alternations: ext.len(), max_err, level_gap }
}
