use crate::error::{Result, SpecError};
use crate::linalg::mat::{dot, Mat};

/// Thin Householder QR of a tall matrix: `m = q · r` with `q` (rows×cols)
/// orthonormal columns and `r` (cols×cols) upper triangular with a
/// non-negative diagonal.
pub fn thin_qr(m: &Mat) -> Result<(Mat, Mat)> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(SpecError::Shape(format!("thin_qr needs rows >= cols, got {rows}x{cols}")));
    }
    if !m.is_finite() {
        return Err(SpecError::NonFinite);
    }
    // Column-contiguous working copy: work[j] is column j.
    let t = m.transpose();
    let mut work: Vec<Vec<f64>> = (0..cols).map(|j| t.row(j).to_vec()).collect();
    let mut vs: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut taus = Vec::with_capacity(cols);

    for j in 0..cols {
        let x = &work[j][j..];
        let norm = dot(x, x).sqrt();
        if norm == 0.0 {
            vs.push(vec![0.0; rows - j]);
            taus.push(0.0);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vv = dot(&v, &v);
        let tau = if vv == 0.0 { 0.0 } else { 2.0 / vv };
        {
            let col = &mut work[j];
            col[j] = alpha;
            for e in col[j + 1..].iter_mut() {
                *e = 0.0;
            }
        }
        for col in work.iter_mut().skip(j + 1) {
            let seg = &mut col[j..];
            let w = tau * dot(&v, seg);
            if w != 0.0 {
                for (s, &vi) in seg.iter_mut().zip(&v) {
                    *s -= w * vi;
                }
            }
        }
        vs.push(v);
        taus.push(tau);
    }

    let mut r = Mat::zeros(cols, cols);
    for (j, col) in work.iter().enumerate() {
        for i in 0..=j {
            r.set(i, j, col[i]);
        }
    }

    // Q columns, accumulated backwards from the leading identity columns.
    let mut qcols: Vec<Vec<f64>> = (0..cols)
        .map(|c| {
            let mut e = vec![0.0; rows];
            e[c] = 1.0;
            e
        })
        .collect();
    for j in (0..cols).rev() {
        let tau = taus[j];
        if tau == 0.0 {
            continue;
        }
        let v = &vs[j];
        for qc in qcols.iter_mut().skip(j) {
            let seg = &mut qc[j..];
            let w = tau * dot(v, seg);
            if w != 0.0 {
                for (s, &vi) in seg.iter_mut().zip(v) {
                    *s -= w * vi;
                }
            }
        }
    }

    // Sign convention: non-negative diagonal of R.
    for j in 0..cols {
        if r.get(j, j) < 0.0 {
            for c in j..cols {
                r.set(j, c, -r.get(j, c));
            }
            for e in qcols[j].iter_mut() {
                *e = -*e;
            }
        }
    }

    let q = Mat::from_fn(rows, cols, |i, j| qcols[j][i]);
    Ok((q, r))
}

/// Inverse of an upper-triangular matrix by back substitution.
pub fn upper_tri_inverse(r: &Mat) -> Result<Mat> {
    let n = r.rows();
    if !r.is_square() {
        return Err(SpecError::Shape("triangular inverse needs a square matrix".into()));
    }
    let mut inv = Mat::zeros(n, n);
    for j in 0..n {
        // Solve R x = e_j.
        for i in (0..=j).rev() {
            let mut s = if i == j { 1.0 } else { 0.0 };
            for k in (i + 1)..=j {
                s -= r.get(i, k) * inv.get(k, j);
            }
            let d = r.get(i, i);
            if d == 0.0 {
                return Err(SpecError::NonFinite);
            }
            inv.set(i, j, s / d);
        }
    }
    Ok(inv)
}
