use crate::error::{Result, SpecError};
use crate::linalg::mat::{dot, Mat};

/// Thin SVD `m = u · diag(s) · vᵀ`, singular values non-increasing.
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Mat {
        self.u.scale_cols(&self.s).matmul_nt(&self.v)
    }

    /// `u · diag(f(s)) · vᵀ`.
    pub fn apply(&self, f: impl Fn(f64) -> f64) -> Mat {
        let d: Vec<f64> = self.s.iter().map(|&x| f(x)).collect();
        self.u.scale_cols(&d).matmul_nt(&self.v)
    }

    /// `u · diag(f(i, sᵢ)) · vᵀ`.
    pub fn apply_indexed(&self, f: impl Fn(usize, f64) -> f64) -> Mat {
        let d: Vec<f64> = self.s.iter().enumerate().map(|(i, &x)| f(i, x)).collect();
        self.u.scale_cols(&d).matmul_nt(&self.v)
    }
}

const MAX_SWEEPS: usize = 80;

/// Brute-force SVD by one-sided Jacobi rotations, always in double precision.
/// Intended as a ground-truth oracle; iteration code paths never call it.
pub fn svd_oracle(m: &Mat) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(SpecError::NonFinite);
    }
    if m.rows() < m.cols() {
        let t = svd_oracle(&m.transpose())?;
        return Ok(SvdResult { u: t.v, s: t.s, v: t.u });
    }
    let (rows, cols) = m.shape();
    let t = m.transpose();
    let mut a: Vec<Vec<f64>> = (0..cols).map(|j| t.row(j).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = 1e-15;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (ap, aq) = pair_mut(&mut a, p, q);
                let alpha = dot(ap, ap);
                let beta = dot(aq, aq);
                let gamma = dot(ap, aq);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(ap, aq, c, s);
                let (vp, vq) = pair_mut(&mut v, p, q);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = a.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let smax = norms.iter().cloned().fold(0.0, f64::max);
    let zero_floor = smax * f64::EPSILON * rows as f64;
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut s = Vec::with_capacity(cols);
    let mut vcols = Vec::with_capacity(cols);
    for &j in &order {
        let sj = norms[j];
        s.push(sj);
        vcols.push(v[j].clone());
        if sj > zero_floor && sj > 0.0 {
            ucols.push(a[j].iter().map(|x| x / sj).collect());
        } else {
            ucols.push(Vec::new());
        }
    }
    // Complete left vectors of (numerically) zero singular values with the
    // coordinate vector least covered by the columns found so far.
    for idx in 0..cols {
        if !ucols[idx].is_empty() {
            continue;
        }
        let best = (0..rows)
            .map(|i| {
                let mut e = vec![0.0; rows];
                e[i] = 1.0;
                for _ in 0..2 {
                    for other in ucols.iter().filter(|c| !c.is_empty()) {
                        let w = dot(other, &e);
                        for (x, o) in e.iter_mut().zip(other) {
                            *x -= w * o;
                        }
                    }
                }
                let n = dot(&e, &e).sqrt();
                (n, e)
            })
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .expect("rows > 0");
        let (n, e) = best;
        ucols[idx] = e.into_iter().map(|x| x / n).collect();
    }

    let u = Mat::from_fn(rows, cols, |i, j| ucols[j][i]);
    let vm = Mat::from_fn(cols, cols, |i, j| vcols[j][i]);
    Ok(SvdResult { u, s, v: vm })
}

/// Singular values only.
pub fn singular_values(m: &Mat) -> Result<Vec<f64>> {
    Ok(svd_oracle(m)?.s)
}

fn pair_mut(cols: &mut [Vec<f64>], p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (lo, hi) = cols.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let xa = *a;
        let yb = *b;
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// `U diag(σ^{1−2a/b}) Vᵀ` with zero singular values mapped to zero.
pub fn fractional_power_oracle(g: &Mat, a: u32, b: u32) -> Result<Mat> {
    let svd = svd_oracle(g)?;
    Ok(fractional_power_from_svd(&svd, a as f64 / b as f64))
}

pub fn fractional_power_from_svd(svd: &SvdResult, c: f64) -> Mat {
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let floor = smax * f64::EPSILON * (svd.u.rows().max(svd.v.rows()) as f64);
    svd.apply(|x| if x > floor && x > 0.0 { x.powf(1.0 - 2.0 * c) } else { 0.0 })
}
