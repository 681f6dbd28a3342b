use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SpecError};
use crate::linalg::{qr::thin_qr, Mat, Precision};

pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_mat(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed matrix with orthonormal columns (rows ≥ cols).
pub fn haar_frame(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
    let g = gaussian_mat(rows, cols, rng);
    thin_qr(&g).expect("gaussian sample is finite").0
}

/// Square Haar orthogonal matrix.
pub fn haar_orthogonal(n: usize, rng: &mut impl Rng) -> Mat {
    haar_frame(n, n, rng)
}

/// `spectrum` of length `count` spaced logarithmically from 1 to 1/κ.
pub fn log_spaced_spectrum(count: usize, kappa: f64) -> Vec<f64> {
    if count == 1 {
        return vec![1.0];
    }
    let lk = kappa.ln();
    (0..count).map(|i| (-lk * i as f64 / (count - 1) as f64).exp()).collect()
}

/// `U diag(spectrum) Vᵀ` with Haar factors, built in double precision and
/// rounded to `precision`.
pub fn haar_factor_matrix(m: usize, n: usize, spectrum: &[f64], seed: u64, precision: Precision) -> Result<Mat> {
    let k = m.min(n);
    if spectrum.len() != k {
        return Err(SpecError::Shape(format!("spectrum length {} != min({m},{n})", spectrum.len())));
    }
    if spectrum.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(SpecError::Shape("spectrum entries must be positive".into()));
    }
    let mut rng = seeded_rng(seed);
    let u = haar_frame(m, k, &mut rng);
    let v = haar_frame(n, k, &mut rng);
    Ok(precision.round_mat(u.scale_cols(spectrum).matmul_nt(&v)))
}
