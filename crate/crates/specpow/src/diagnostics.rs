//! Alignment `γ`, descent potential `Φ`, directional curvature `λ` and the
//! exact one-step descent identity on quadratic objectives.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpecError};
use crate::linalg::mat::dot;
use crate::linalg::Mat;

/// Directional curvature `D ↦ ⟨D, H[D]⟩` of a constant Hessian.
pub trait QuadraticForm {
    fn curvature(&self, d: &Mat) -> f64;
}

/// `scale·‖D‖²_F`.
#[derive(Clone, Copy, Debug)]
pub struct FrobeniusForm {
    pub scale: f64,
}

impl QuadraticForm for FrobeniusForm {
    fn curvature(&self, d: &Mat) -> f64 {
        self.scale * d.dot(d)
    }
}

/// `scale·‖DA‖²_F`, the random-feature Hessian with `scale = 2/(N√d)`.
#[derive(Clone, Debug)]
pub struct FeatureForm {
    pub a: Mat,
    pub scale: f64,
}

impl FeatureForm {
    pub fn rf(a: &Mat) -> Self {
        let (d, n) = a.shape();
        Self { a: a.clone(), scale: 2.0 / (n as f64 * (d as f64).sqrt()) }
    }
}

impl QuadraticForm for FeatureForm {
    fn curvature(&self, d: &Mat) -> f64 {
        let da = d.matmul(&self.a);
        self.scale * da.dot(&da)
    }
}

/// Hessian materialised over the row-major vectorisation of `D`.
#[derive(Clone, Debug)]
pub struct DenseHessian {
    pub h: Mat,
}

impl QuadraticForm for DenseHessian {
    fn curvature(&self, d: &Mat) -> f64 {
        let v = d.data();
        (0..self.h.rows()).map(|i| v[i] * dot(self.h.row(i), v)).sum()
    }
}

/// Curvature given by a closure.
pub struct FnForm<F>(pub F);

impl<F: Fn(&Mat) -> f64> QuadraticForm for FnForm<F> {
    fn curvature(&self, d: &Mat) -> f64 {
        (self.0)(d)
    }
}

/// A quadratic objective: value, gradient and its constant Hessian.
pub trait QuadraticObjective: QuadraticForm {
    fn value(&self, x: &Mat) -> f64;
    fn gradient(&self, x: &Mat) -> Mat;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescentRecord {
    pub gamma: f64,
    pub phi: f64,
    pub lambda: f64,
    pub alpha_lambda: f64,
    pub predicted_delta: f64,
    pub actual_delta: f64,
}

impl DescentRecord {
    pub fn relative_residual(&self) -> f64 {
        (self.predicted_delta - self.actual_delta).abs() / self.actual_delta.abs()
    }
}

/// `⟨G, D⟩ / ⟨G̃, D⟩`.
pub fn alignment_gamma(g_full: &Mat, g_batch: &Mat, d: &Mat) -> Result<f64> {
    check_shapes(&[g_full, g_batch], d)?;
    let den = g_batch.dot(d);
    if den == 0.0 || !den.is_finite() {
        return Err(SpecError::DegenerateDirection);
    }
    Ok(g_full.dot(d) / den)
}

/// `⟨G̃, D⟩² / ⟨D, H[D]⟩`.
pub fn descent_potential_phi(g_batch: &Mat, d: &Mat, form: &dyn QuadraticForm) -> Result<f64> {
    check_shapes(&[g_batch], d)?;
    let lambda = form.curvature(d);
    if !(lambda > 0.0) {
        return Err(SpecError::NonPositiveCurvature(lambda));
    }
    let inner = g_batch.dot(d);
    Ok(inner * inner / lambda)
}

/// Takes the step `X' = X − α⟨G̃, D⟩D` and compares the realised change of
/// `f` with `−Φ(γ − αλ/2)αλ`.
pub fn exact_descent_check(
    f: &dyn QuadraticObjective,
    x: &Mat,
    g_batch: &Mat,
    d: &Mat,
    alpha: f64,
) -> Result<DescentRecord> {
    let g_full = f.gradient(x);
    let gamma = alignment_gamma(&g_full, g_batch, d)?;
    let phi = descent_potential_phi(g_batch, d, f)?;
    let lambda = f.curvature(d);
    let alpha_lambda = alpha * lambda;
    let predicted_delta = -phi * (gamma - 0.5 * alpha_lambda) * alpha_lambda;
    let next = x.sub(&d.scale(alpha * g_batch.dot(d)));
    let actual_delta = f.value(&next) - f.value(x);
    Ok(DescentRecord { gamma, phi, lambda, alpha_lambda, predicted_delta, actual_delta })
}

/// Minimiser over `η` of the random-feature loss along `W − ηD`:
/// `⟨G, D⟩ / ((2/(N√d))‖DA‖²_F)`.
pub fn optimal_step(g: &Mat, d: &Mat, a: &Mat, d_dim: usize) -> Result<f64> {
    check_shapes(&[g], d)?;
    if d.cols() != a.rows() {
        return Err(SpecError::Shape(format!("direction {:?} vs features {:?}", d.shape(), a.shape())));
    }
    let n = a.cols() as f64;
    let da = d.matmul(a);
    let curv = 2.0 / (n * (d_dim as f64).sqrt()) * da.dot(&da);
    if !(curv > 0.0) {
        return Err(SpecError::NonPositiveCurvature(curv));
    }
    Ok(g.dot(d) / curv)
}

fn check_shapes(ms: &[&Mat], d: &Mat) -> Result<()> {
    for m in ms {
        if m.shape() != d.shape() {
            return Err(SpecError::Shape(format!("{:?} vs direction {:?}", m.shape(), d.shape())));
        }
    }
    Ok(())
}
