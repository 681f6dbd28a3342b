//! Oracles shared by the integration tests and the acceptance binary. They
//! avoid the library's own SVD: spectral quantities come from a two-sided
//! Jacobi eigensolver on the Gram matrix.

#![allow(dead_code, clippy::needless_range_loop)]

use specpow::linalg::random::gaussian_mat;
use specpow::linalg::{seeded_rng, Mat};

/// Symmetric eigendecomposition by cyclic two-sided Jacobi. Returns
/// eigenvalues in descending order and the eigenvectors as columns.
pub fn jacobi_eigh(a: &Mat) -> (Vec<f64>, Mat) {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum();
        if off <= 1e-32 * diag || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let vals = order.iter().map(|&i| m[i][i]).collect();
    let vecs = Mat::from_fn(n, n, |i, j| v[i][order[j]]);
    (vals, vecs)
}

/// Singular values from the eigenvalues of the smaller Gram matrix.
pub fn gram_singular_values(g: &Mat) -> Vec<f64> {
    let gram = if g.rows() <= g.cols() { g.matmul_nt(g) } else { g.matmul_tn(g) };
    jacobi_eigh(&gram.symmetrize()).0.into_iter().map(|x| x.max(0.0).sqrt()).collect()
}

/// `(GGᵀ)^{-c}G` through the eigendecomposition of `GGᵀ`; requires full row
/// rank after orienting `G` short side first.
pub fn eig_fractional_power(g: &Mat, c: f64) -> Mat {
    if g.rows() > g.cols() {
        return eig_fractional_power(&g.transpose(), c).transpose();
    }
    let (vals, vecs) = jacobi_eigh(&g.matmul_nt(g).symmetrize());
    let d: Vec<f64> = vals.iter().map(|&x| x.powf(-c)).collect();
    vecs.scale_cols(&d).matmul_nt(&vecs).matmul(g)
}

/// `(GGᵀ)^p` for `G` of full row rank.
pub fn gram_power(g: &Mat, p: f64) -> Mat {
    let (vals, vecs) = jacobi_eigh(&g.matmul_nt(g).symmetrize());
    let d: Vec<f64> = vals.iter().map(|&x| x.powf(p)).collect();
    vecs.scale_cols(&d).matmul_nt(&vecs)
}

pub fn rel_frob(a: &Mat, b: &Mat) -> f64 {
    a.sub(b).frob_norm() / b.frob_norm()
}

pub fn spectral_norm(m: &Mat) -> f64 {
    gram_singular_values(m)[0]
}

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
    gaussian_mat(rows, cols, &mut seeded_rng(seed))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn from(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Dd { hi: s, lo: err }
    }

    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    fn two_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    pub fn add(self, o: Dd) -> Dd {
        let s = Self::two_sum(self.hi, o.hi);
        let t = Self::two_sum(self.lo, o.lo);
        let s = Self::quick_two_sum(s.hi, s.lo + t.hi);
        Self::quick_two_sum(s.hi, s.lo + t.lo)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = Self::two_prod(self.hi, o.hi);
        let lo = p.lo + (self.hi * o.lo + self.lo * o.hi);
        Self::quick_two_sum(p.hi, lo)
    }
}

/// Row-major matrix of double-double entries.
#[derive(Clone, Debug)]
pub struct DdMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Dd>,
}

impl DdMat {
    pub fn from_mat(m: &Mat) -> Self {
        DdMat { rows: m.rows(), cols: m.cols(), data: m.data().iter().map(|&x| Dd::from(x)).collect() }
    }

    pub fn get(&self, i: usize, j: usize) -> Dd {
        self.data[i * self.cols + j]
    }

    pub fn sub(&self, o: &DdMat) -> DdMat {
        DdMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a.sub(*b)).collect(),
        }
    }

    pub fn matmul(&self, o: &DdMat) -> DdMat {
        let mut data = vec![Dd::default(); self.rows * o.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                for j in 0..o.cols {
                    let cell = &mut data[i * o.cols + j];
                    *cell = cell.add(a.mul(o.get(k, j)));
                }
            }
        }
        DdMat { rows: self.rows, cols: o.cols, data }
    }

    pub fn sq_norm(&self) -> Dd {
        self.data.iter().fold(Dd::default(), |acc, x| acc.add(x.mul(*x)))
    }
}

/// `X − s·D` with `s` a double-double scalar.
pub fn dd_axpy(x: &Mat, s: Dd, d: &Mat) -> DdMat {
    let data = x.data().iter().zip(d.data()).map(|(&xi, &di)| Dd::from(xi).sub(s.mul(Dd::from(di)))).collect();
    DdMat { rows: x.rows(), cols: x.cols(), data }
}

pub fn dd_dot(a: &Mat, b: &Mat) -> Dd {
    a.data().iter().zip(b.data()).fold(Dd::default(), |acc, (&x, &y)| acc.add(Dd::from(x).mul(Dd::from(y))))
}
