//! Random-feature quadratic testbed, its trainers, exponent selection and
//! the proportional-limit formulas for the diagonal case.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{FeatureForm, QuadraticForm, QuadraticObjective};
use crate::error::{Result, SpecError};
use crate::linalg::random::gaussian_mat;
use crate::linalg::{seeded_rng, svd_oracle, Mat, SvdResult};

/// Loss above which a run is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;
pub const DEFAULT_LR: f64 = 1e-2;
/// Relative cut below which singular values count as zero.
const SIGMA_CUT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Swiglu,
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RfProblem {
    pub w: Mat,
    pub w_star: Mat,
    pub a_feat: Mat,
    pub n_samples: usize,
    pub d_dim: usize,
    pub o_dim: usize,
    pub activation: Activation,
    /// Seed for the stochastic parts of training (Kaon spectra).
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RfMethod {
    Gd,
    Specgd,
    Kaon,
    GdOptstep,
    SpecgdOptstep,
    OptimalCGreedy,
    OptimalCScaling,
}

impl RfMethod {
    pub const ALL: [RfMethod; 7] = [
        RfMethod::Gd,
        RfMethod::Specgd,
        RfMethod::Kaon,
        RfMethod::GdOptstep,
        RfMethod::SpecgdOptstep,
        RfMethod::OptimalCGreedy,
        RfMethod::OptimalCScaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RfMethod::Gd => "gd",
            RfMethod::Specgd => "specgd",
            RfMethod::Kaon => "kaon",
            RfMethod::GdOptstep => "gd-optstep",
            RfMethod::SpecgdOptstep => "specgd-optstep",
            RfMethod::OptimalCGreedy => "optimal-c-greedy",
            RfMethod::OptimalCScaling => "optimal-c-scaling",
        }
    }
}

impl std::str::FromStr for RfMethod {
    type Err = SpecError;
    fn from_str(s: &str) -> Result<Self> {
        RfMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| SpecError::Config { path: "method".into(), msg: format!("unknown method {s:?}") })
    }
}

impl std::fmt::Display for RfMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    pub eta: f64,
    pub c: f64,
    pub gamma: f64,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RfTrace {
    pub method: RfMethod,
    pub rows: Vec<TraceRow>,
    pub diverged: bool,
    pub final_loss: f64,
}

impl RfTrace {
    pub fn etas(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.eta).collect()
    }
}

fn swish(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// `A = act(M·X)` with `M` of variance `1/d₀` and `X` standard Gaussian
/// (`d₀ = d`); the identity activation returns a Gaussian `A` directly.
pub fn make_rf_problem(o: usize, d: usize, n: usize, activation: Activation, seed: u64) -> Result<RfProblem> {
    if o == 0 || d == 0 || n == 0 {
        return Err(SpecError::Config { path: "dims".into(), msg: format!("o={o}, d={d}, N={n} must be positive") });
    }
    let mut rng = seeded_rng(seed);
    let d0 = d;
    let m_scale = 1.0 / (d0 as f64).sqrt();
    let a_feat = match activation {
        Activation::Identity => gaussian_mat(d, n, &mut rng),
        Activation::Relu => {
            let m = gaussian_mat(d, d0, &mut rng).scale(m_scale);
            let x = gaussian_mat(d0, n, &mut rng);
            m.matmul(&x).map(|v| v.max(0.0))
        }
        Activation::Swiglu => {
            let m = gaussian_mat(2 * d, d0, &mut rng).scale(m_scale);
            let x = gaussian_mat(d0, n, &mut rng);
            let pre = m.matmul(&x);
            let gate = pre.row_block(0, d);
            let lin = pre.row_block(d, 2 * d);
            gate.zip_map(&lin, |g, l| swish(g) * l)
        }
    };
    let w = gaussian_mat(o, d, &mut rng);
    let w_star = gaussian_mat(o, d, &mut rng);
    Ok(RfProblem { w, w_star, a_feat, n_samples: n, d_dim: d, o_dim: o, activation, seed })
}

impl RfProblem {
    fn norm_const(&self) -> f64 {
        1.0 / (self.n_samples as f64 * (self.d_dim as f64).sqrt())
    }

    pub fn loss_at(&self, w: &Mat) -> f64 {
        let r = w.sub(&self.w_star).matmul(&self.a_feat);
        self.norm_const() * r.dot(&r)
    }

    pub fn grad_at(&self, w: &Mat) -> Mat {
        let aat = self.a_feat.gram();
        w.sub(&self.w_star).matmul(&aat).scale(2.0 * self.norm_const())
    }

    pub fn hessian_form(&self) -> FeatureForm {
        FeatureForm::rf(&self.a_feat)
    }
}

impl QuadraticForm for RfProblem {
    fn curvature(&self, d: &Mat) -> f64 {
        let da = d.matmul(&self.a_feat);
        2.0 * self.norm_const() * da.dot(&da)
    }
}

impl QuadraticObjective for RfProblem {
    fn value(&self, x: &Mat) -> f64 {
        self.loss_at(x)
    }
    fn gradient(&self, x: &Mat) -> Mat {
        self.grad_at(x)
    }
}

/// `(1/(N√d))‖WA − W*A‖²_F`.
pub fn rf_loss(p: &RfProblem) -> f64 {
    p.loss_at(&p.w)
}

/// `(2/(N√d))(W − W*)AAᵀ`.
pub fn rf_grad(p: &RfProblem) -> Mat {
    p.grad_at(&p.w)
}

fn rank_of(s: &[f64]) -> usize {
    let top = s.first().copied().unwrap_or(0.0);
    s.iter().take_while(|&&x| x > SIGMA_CUT * top).count()
}

/// Power mean `((1/r)Σσ^{2(1−c)})^{1/(2(1−c))}`, geometric mean at `c = 1`.
pub fn power_mean(s: &[f64], c: f64) -> f64 {
    let r = s.len() as f64;
    let q = 2.0 * (1.0 - c);
    if q.abs() < 1e-12 {
        return (s.iter().map(|x| x.ln()).sum::<f64>() / r).exp();
    }
    // Factor out the largest value so large |q| stays finite.
    let top = s.iter().fold(0.0_f64, |m, &x| m.max(x));
    let inner: f64 = s.iter().map(|&x| (x / top).powf(q)).sum::<f64>() / r;
    top * inner.powf(1.0 / q)
}

/// `U diag((σ/μ_c)^{1−2c}) Vᵀ` over the numerically nonzero spectrum.
pub fn exponent_direction(svd: &SvdResult, c: f64) -> Mat {
    let r = rank_of(&svd.s);
    let mu = power_mean(&svd.s[..r], c);
    svd.apply_indexed(|i, x| if i < r { (x / mu).powf(1.0 - 2.0 * c) } else { 0.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyChoice {
    pub c: f64,
    pub eta: f64,
    pub predicted_delta: f64,
}

/// The 41-point grid on `[−0.5, 1.5]`.
pub fn default_c_grid() -> Vec<f64> {
    (0..41).map(|i| -0.5 + 0.05 * i as f64).collect()
}

/// Picks the exponent minimising the predicted one-step decrease
/// `−n·a(c)²/(2b(c))` with `n = N/2`. Ties go to the smallest `|c|`.
pub fn optimal_c_greedy(g: &Mat, a: &Mat, d_dim: usize, grid: &[f64]) -> Result<GreedyChoice> {
    let svd = svd_oracle(g)?;
    greedy_from_svd(&svd, a, d_dim, grid)
}

fn greedy_from_svd(svd: &SvdResult, a: &Mat, d_dim: usize, grid: &[f64]) -> Result<GreedyChoice> {
    if grid.is_empty() {
        return Err(SpecError::EmptyGrid);
    }
    if rank_of(&svd.s) == 0 {
        return Err(SpecError::ZeroGradient);
    }
    let n = a.cols() as f64 / 2.0;
    let sqrt_d = (d_dim as f64).sqrt();
    let g = svd.reconstruct();
    let mut best: Option<GreedyChoice> = None;
    for &c in grid {
        let dc = exponent_direction(svd, c);
        let ac = g.dot(&dc);
        let da = dc.matmul(a);
        let bc = da.dot(&da) / sqrt_d;
        if !(bc > 0.0) || !ac.is_finite() {
            continue;
        }
        let cand = GreedyChoice { c, eta: n * ac / bc, predicted_delta: -n * ac * ac / (2.0 * bc) };
        best = match best {
            None => Some(cand),
            Some(b) => {
                let tol = 1e-12 * b.predicted_delta.abs();
                if cand.predicted_delta < b.predicted_delta - tol
                    || ((cand.predicted_delta - b.predicted_delta).abs() <= tol && cand.c.abs() < b.c.abs())
                {
                    Some(cand)
                } else {
                    Some(b)
                }
            }
        };
    }
    best.ok_or(SpecError::DegenerateDirection)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Set when the spectrum does not decay (`α ≤ 0`) and `c = 0` was returned.
    pub non_decaying: bool,
}

/// Least-squares slope of `log y` against `−log i` (1-based), skipping
/// numerically zero entries.
fn decay_exponent(ys: &[f64]) -> f64 {
    let top = ys.iter().fold(0.0_f64, |m, &x| m.max(x));
    let pts: Vec<(f64, f64)> = ys
        .iter()
        .enumerate()
        .filter(|&(_, &y)| y > SIGMA_CUT * top && y > 0.0)
        .map(|(i, &y)| (-((i + 1) as f64).ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return 0.0;
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / m, b + y / m));
    let sxy: f64 = pts.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// `c* = clamp(β/(2α), −0.5, 1.5)` from power-law fits `σᵢ ∝ i^{−α}`,
/// `kᵢ ∝ i^{−β}`.
pub fn scaling_exponent(sigma: &[f64], k: &[f64]) -> ScalingFit {
    let alpha = decay_exponent(sigma);
    let beta = decay_exponent(k);
    if !(alpha > 0.0) {
        log::warn!("non-decaying gradient spectrum (alpha = {alpha:.3e}); using c = 0");
        return ScalingFit { c: 0.0, alpha, beta, non_decaying: true };
    }
    ScalingFit { c: (beta / (2.0 * alpha)).clamp(-0.5, 1.5), alpha, beta, non_decaying: false }
}

/// Scaling-law exponent with `kᵢ = ‖vᵢᵀA‖²` for the right singular vectors
/// of `G`.
pub fn optimal_c_scaling(g: &Mat, a: &Mat) -> Result<ScalingFit> {
    let svd = svd_oracle(g)?;
    Ok(scaling_from_svd(&svd, a))
}

fn scaling_from_svd(svd: &SvdResult, a: &Mat) -> ScalingFit {
    let r = rank_of(&svd.s);
    let vta = svd.v.transpose().matmul(a);
    let k: Vec<f64> = (0..r).map(|i| crate::linalg::mat::dot(vta.row(i), vta.row(i))).collect();
    scaling_exponent(&svd.s[..r], &k)
}

/// Runs `steps` updates `W ← W − η⟨G, D⟩D` and records one row per step
/// (taken before the update). Optimal-step methods use `η = 1/⟨D, H[D]⟩`,
/// the exact line minimiser with full-batch gradients.
pub fn rf_train(p: &RfProblem, method: RfMethod, steps: usize, lr: f64) -> Result<RfTrace> {
    let mut w = p.w.clone();
    let mut rng = seeded_rng(p.seed ^ 0x6b61_6f6e);
    let grid = default_c_grid();
    let mut rows = Vec::with_capacity(steps);
    let mut diverged = false;
    for step in 0..steps {
        let loss = p.loss_at(&w);
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            diverged = true;
            break;
        }
        let g = p.grad_at(&w);
        let gnorm = g.frob_norm();
        if gnorm == 0.0 {
            rows.push(TraceRow { step, loss, eta: 0.0, c: f64::NAN, gamma: 1.0, phi: 0.0 });
            continue;
        }
        let (d, c) = match method {
            RfMethod::Gd | RfMethod::GdOptstep => (g.scale(1.0 / gnorm), 0.0),
            RfMethod::Specgd | RfMethod::SpecgdOptstep => (exponent_direction(&svd_oracle(&g)?, 0.5), 0.5),
            RfMethod::Kaon => {
                let svd = svd_oracle(&g)?;
                let r = rank_of(&svd.s);
                let noise: Vec<f64> = (0..svd.s.len()).map(|i| if i < r { rng.random::<f64>() } else { 0.0 }).collect();
                (svd.apply_indexed(|i, _| noise[i]), f64::NAN)
            }
            RfMethod::OptimalCGreedy => {
                let svd = svd_oracle(&g)?;
                let c = greedy_from_svd(&svd, &p.a_feat, p.d_dim, &grid)?.c;
                (exponent_direction(&svd, c), c)
            }
            RfMethod::OptimalCScaling => {
                let svd = svd_oracle(&g)?;
                let c = scaling_from_svd(&svd, &p.a_feat).c;
                (exponent_direction(&svd, c), c)
            }
        };
        let lambda = p.curvature(&d);
        let inner = g.dot(&d);
        let phi = if lambda > 0.0 { inner * inner / lambda } else { f64::NAN };
        let eta = match method {
            RfMethod::Gd | RfMethod::Specgd | RfMethod::Kaon => lr,
            _ => {
                if !(lambda > 0.0) {
                    return Err(SpecError::NonPositiveCurvature(lambda));
                }
                1.0 / lambda
            }
        };
        rows.push(TraceRow { step, loss, eta, c, gamma: 1.0, phi });
        w = w.sub(&d.scale(eta * inner));
    }
    let final_loss = p.loss_at(&w);
    if !final_loss.is_finite() || final_loss > DIVERGENCE_LOSS {
        diverged = true;
    }
    Ok(RfTrace { method, rows, diverged, final_loss })
}

/// `p_k(C)` for `k ∈ {1, 2, 3}` with `τᵢ = tr(Cⁱ)/n`; `p₃ = C³ + 2δτ₁C² + (δτ₂ + δ²τ₁²)C`.
pub fn rf_asym_polynomial(c: &Mat, delta: f64, k: usize) -> Result<Mat> {
    if !c.is_square() {
        return Err(SpecError::Shape(format!("C must be square, got {:?}", c.shape())));
    }
    if !(1..=3).contains(&k) {
        return Err(SpecError::UnsupportedMomentOrder(k));
    }
    let n = c.rows() as f64;
    let c2 = c.matmul(c);
    let tau1 = c.trace() / n;
    let tau2 = c2.trace() / n;
    Ok(match k {
        1 => c.clone(),
        2 => c2.add(&c.scale(delta * tau1)),
        _ => c2.matmul(c).add(&c2.scale(2.0 * delta * tau1)).add(&c.scale(delta * tau2 + delta * delta * tau1 * tau1)),
    })
}

/// `p_k` applied to a diagonal `C`, returned as its diagonal.
pub fn asym_polynomial_diag(c_diag: &[f64], delta: f64, k: usize) -> Result<Vec<f64>> {
    if !(1..=3).contains(&k) {
        return Err(SpecError::UnsupportedMomentOrder(k));
    }
    let n = c_diag.len() as f64;
    let tau1 = c_diag.iter().sum::<f64>() / n;
    let tau2 = c_diag.iter().map(|x| x * x).sum::<f64>() / n;
    Ok(c_diag
        .iter()
        .map(|&x| match k {
            1 => x,
            2 => x * x + delta * tau1 * x,
            _ => x.powi(3) + 2.0 * delta * tau1 * x * x + (delta * tau2 + delta * delta * tau1 * tau1) * x,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticSpec {
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub delta: f64,
}

impl AsymptoticSpec {
    pub fn new(sigma: Vec<f64>, lambda: Vec<f64>, delta: f64) -> Result<Self> {
        if sigma.len() != lambda.len() || sigma.is_empty() {
            return Err(SpecError::Shape(format!("sigma {} vs lambda {}", sigma.len(), lambda.len())));
        }
        if sigma.iter().chain(&lambda).any(|&x| !(x > 0.0)) || !(delta > 0.0) {
            return Err(SpecError::Config { path: "spec".into(), msg: "entries and delta must be positive".into() });
        }
        Ok(Self { sigma, lambda, delta })
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    fn x_h_d(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let dl = self.delta;
        self.sigma.iter().zip(&self.lambda).map(move |(&s, &l)| {
            let x = s * (l * (l + dl)).sqrt();
            let h = 1.0 / (l + dl);
            let big_d = (l.powi(3) + 2.0 * dl * l * l + (dl + dl * dl) * l) / (l * l + dl * l);
            (x, h, big_d)
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LimitMethod {
    Sgd,
    Muon,
}

/// Limiting `(γ, Φ)` in the diagonal case.
pub fn limiting_gamma_phi(spec: &AsymptoticSpec, method: LimitMethod) -> (f64, f64) {
    let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
    for (x, h, big_d) in spec.x_h_d() {
        match method {
            LimitMethod::Muon => {
                s1 += x * h;
                s2 += x;
                s3 += big_d;
            }
            LimitMethod::Sgd => {
                s1 += x * x * h;
                s2 += x * x;
                s3 += x * x * big_d;
            }
        }
    }
    let gamma = s1 / s2;
    let phi = s2 * s2 / s3;
    (gamma, phi)
}

/// `(Σσᵢ²λᵢ, (Σσᵢλᵢ^{1/2})²/r)`.
pub fn delta_infinity_limits(spec: &AsymptoticSpec) -> (f64, f64) {
    let sgd: f64 = spec.sigma.iter().zip(&spec.lambda).map(|(s, l)| s * s * l).sum();
    let m: f64 = spec.sigma.iter().zip(&spec.lambda).map(|(s, l)| s * l.sqrt()).sum();
    (sgd, m * m / spec.rank() as f64)
}

/// Operator-norm gaps `‖VᵀHᵏV − Vᵀp_k(C)V‖` for `k = 1..=k_max`, with
/// `H = (1/b)AAᵀ`, `A = C^{1/2}Z` and `C = diag(c_diag)`. `z` may be larger
/// than `n × b`; its leading block is used.
pub fn moment_gaps(c_diag: &[f64], z: &Mat, b: usize, v: &Mat, k_max: usize) -> Result<Vec<f64>> {
    let n = c_diag.len();
    if v.rows() != n || z.rows() < n || z.cols() < b {
        return Err(SpecError::Shape(format!("V {:?}, Z {:?}, n = {n}, b = {b}", v.shape(), z.shape())));
    }
    if c_diag.iter().any(|&x| x < 0.0) {
        return Err(SpecError::Config { path: "c_diag".into(), msg: "C must be PSD".into() });
    }
    let a = Mat::from_fn(n, b, |i, j| c_diag[i].sqrt() * z.get(i, j));
    let at = a.transpose();
    let delta = n as f64 / b as f64;
    let mut hv = v.clone();
    let mut gaps = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        hv = a.matmul(&at.matmul(&hv)).scale(1.0 / b as f64);
        let emp = v.matmul_tn(&hv);
        let target = v.matmul_tn(&v.scale_rows(&asym_polynomial_diag(c_diag, delta, k)?));
        gaps.push(crate::linalg::singular_values(&emp.sub(&target))?[0]);
    }
    Ok(gaps)
}

/// Median moment gaps per `n` (with `b = n`) over `seeds` nested draws:
/// each seed fixes one `C` diagonal (uniform on `(0, 1)`) and one Gaussian
/// array, and every `n` uses their leading block. `V` is the first `r`
/// coordinate vectors. Returns `medians[n_index][k − 1]`.
pub fn finite_size_gaps(ns: &[usize], seeds: std::ops::Range<u64>, r: usize, k_max: usize) -> Result<Vec<Vec<f64>>> {
    let n_max = ns.iter().copied().max().ok_or(SpecError::EmptyGrid)?;
    if r == 0 || ns.iter().any(|&n| n < r) {
        return Err(SpecError::Config { path: "r".into(), msg: format!("need 0 < r <= min n, got {r}") });
    }
    let mut per_n: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); k_max]; ns.len()];
    for seed in seeds {
        let mut rng = seeded_rng(seed);
        let c_all: Vec<f64> = (0..n_max).map(|_| rng.random::<f64>()).collect();
        let z = gaussian_mat(n_max, n_max, &mut rng);
        for (ni, &n) in ns.iter().enumerate() {
            let v = Mat::from_fn(n, r, |i, j| if i == j { 1.0 } else { 0.0 });
            let gaps = moment_gaps(&c_all[..n], &z, n, &v, k_max)?;
            for (k, g) in gaps.into_iter().enumerate() {
                per_n[ni][k].push(g);
            }
        }
    }
    Ok(per_n.into_iter().map(|ks| ks.into_iter().map(median).collect()).collect())
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}
