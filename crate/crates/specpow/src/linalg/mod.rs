//! Dense kernels, factorizations, precision emulation and the SVD oracle.

pub mod engine;
pub mod io;
pub mod mat;
pub mod precision;
pub mod qr;
pub mod random;
pub mod svd;

pub use engine::{addition_chain, ceil_log2, power_cost, CostLedger, Engine};
pub use mat::Mat;
pub use precision::Precision;
pub use qr::thin_qr;
pub use random::{haar_factor_matrix, log_spaced_spectrum, seeded_rng};
pub use svd::{fractional_power_oracle, singular_values, svd_oracle, SvdResult};

use crate::error::{Result, SpecError};

/// `Aᵏ` for symmetric `A` with the number of square products spent.
pub fn sym_int_power(a: &Mat, k: u32) -> Result<(Mat, u64)> {
    if !a.is_square() {
        return Err(SpecError::Shape(format!("sym_int_power of non-square {}x{}", a.rows(), a.cols())));
    }
    let mut eng = Engine::new(Precision::F64);
    let p = eng.power(a, k)?;
    Ok((p, eng.ledger.s_mm))
}

/// Singular-value ratio error `max_i |σᵢ(Ẑ)·σᵢ(G)^{(2a−b)/b} − 1|`, pairing
/// each output value with the target value of the same rank.
pub fn eps_sv(output_s: &[f64], g_s: &[f64], a: u32, b: u32) -> f64 {
    let c = a as f64 / b as f64;
    let mut target: Vec<f64> = g_s.iter().map(|&s| s.powf(1.0 - 2.0 * c)).collect();
    let mut out = output_s.to_vec();
    target.sort_by(|x, y| y.total_cmp(x));
    out.sort_by(|x, y| y.total_cmp(x));
    let mut worst: f64 = 0.0;
    for (o, t) in out.iter().zip(&target) {
        let e = (o / t - 1.0).abs();
        if e.is_nan() {
            return f64::INFINITY;
        }
        worst = worst.max(e);
    }
    worst
}
