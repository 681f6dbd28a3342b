use serde::{Deserialize, Serialize};

use crate::error::{Result, SpecError};
use crate::linalg::{qr::thin_qr, Mat, Precision};

/// Counts of primitive products consumed by a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    /// Full products involving the long side of the gradient.
    pub g_mm: u64,
    /// Products of short-side square matrices.
    pub s_mm: u64,
    /// Thin QR factorizations.
    pub qr: u64,
}

impl CostLedger {
    pub fn new(g_mm: u64, s_mm: u64, qr: u64) -> Self {
        Self { g_mm, s_mm, qr }
    }
}

impl std::ops::Add for CostLedger {
    type Output = CostLedger;
    fn add(self, o: CostLedger) -> CostLedger {
        CostLedger { g_mm: self.g_mm + o.g_mm, s_mm: self.s_mm + o.s_mm, qr: self.qr + o.qr }
    }
}

impl std::ops::Mul<u64> for CostLedger {
    type Output = CostLedger;
    fn mul(self, t: u64) -> CostLedger {
        CostLedger { g_mm: self.g_mm * t, s_mm: self.s_mm * t, qr: self.qr * t }
    }
}

/// Arithmetic context of one run: rounds every primitive result to the
/// active precision and records the product counts.
#[derive(Clone, Debug)]
pub struct Engine {
    pub precision: Precision,
    pub ledger: CostLedger,
}

impl Engine {
    pub fn new(precision: Precision) -> Self {
        Self { precision, ledger: CostLedger::default() }
    }

    /// Round an elementwise result.
    pub fn ew(&self, m: Mat) -> Mat {
        self.precision.round_mat(m)
    }

    pub fn scalar(&self, x: f64) -> f64 {
        self.precision.round(x)
    }

    /// Gradient-sized product `a · b`.
    pub fn gmm(&mut self, a: &Mat, b: &Mat) -> Mat {
        self.ledger.g_mm += 1;
        self.ew(a.matmul(b))
    }

    /// Gradient-sized product `a · bᵀ`.
    pub fn gmm_nt(&mut self, a: &Mat, b: &Mat) -> Mat {
        self.ledger.g_mm += 1;
        if std::ptr::eq(a, b) {
            return self.ew(a.gram());
        }
        self.ew(a.matmul_nt(b))
    }

    /// Square product `a · b`.
    pub fn smm(&mut self, a: &Mat, b: &Mat) -> Mat {
        self.ledger.s_mm += 1;
        self.ew(a.matmul(b))
    }

    /// Square product `a · bᵀ`.
    pub fn smm_nt(&mut self, a: &Mat, b: &Mat) -> Mat {
        self.ledger.s_mm += 1;
        if std::ptr::eq(a, b) {
            return self.ew(a.gram());
        }
        self.ew(a.matmul_nt(b))
    }

    pub fn qr(&mut self, m: &Mat) -> Result<(Mat, Mat)> {
        self.ledger.qr += 1;
        let (q, r) = thin_qr(m)?;
        Ok((self.ew(q), self.ew(r)))
    }

    /// `aᵏ` by the shortest addition chain (binary exponentiation beyond the
    /// tabulated range); each multiply is one square product.
    pub fn power(&mut self, a: &Mat, k: u32) -> Result<Mat> {
        if !a.is_square() {
            return Err(SpecError::Shape(format!("power of non-square {}x{}", a.rows(), a.cols())));
        }
        if k == 0 {
            return Ok(Mat::eye(a.rows()));
        }
        let chain = addition_chain(k);
        let mut powers: Vec<(u32, Mat)> = vec![(1, a.clone())];
        for &target in &chain[1..] {
            let (i, j) = find_pair(&powers, target);
            let prod = self.smm(&powers[i].1, &powers[j].1);
            powers.push((target, prod));
        }
        Ok(powers.pop().map(|(_, m)| m).unwrap_or_else(|| a.clone()))
    }
}

fn find_pair(powers: &[(u32, Mat)], target: u32) -> (usize, usize) {
    for i in (0..powers.len()).rev() {
        for j in 0..=i {
            if powers[i].0 + powers[j].0 == target {
                return (i, j);
            }
        }
    }
    unreachable!("addition chain step {target} not reachable")
}

/// Number of products `Engine::power` spends on exponent `k`.
pub fn power_cost(k: u32) -> u64 {
    if k <= 1 {
        return 0;
    }
    (addition_chain(k).len() - 1) as u64
}

/// `⌈log₂ k⌉` for `k ≥ 1`.
pub fn ceil_log2(k: u32) -> u64 {
    if k <= 1 {
        0
    } else {
        (32 - (k - 1).leading_zeros()) as u64
    }
}

const CHAIN_SEARCH_LIMIT: u32 = 64;

/// A shortest addition chain `1 = c₀ < c₁ < … < c_L = k`. Its length equals
/// `⌈log₂ k⌉` whenever such a chain exists (k = 7, 11, 13, … need one more).
pub fn addition_chain(k: u32) -> Vec<u32> {
    assert!(k >= 1);
    if k == 1 {
        return vec![1];
    }
    if k > CHAIN_SEARCH_LIMIT {
        return binary_chain(k);
    }
    let mut depth = ceil_log2(k) as usize;
    loop {
        let mut chain = vec![1u32];
        if search_chain(&mut chain, k, depth) {
            return chain;
        }
        depth += 1;
    }
}

fn search_chain(chain: &mut Vec<u32>, k: u32, depth: usize) -> bool {
    let last = *chain.last().unwrap();
    if last == k {
        return true;
    }
    let steps_left = depth + 1 - chain.len();
    if steps_left == 0 || (last as u64) << steps_left < k as u64 {
        return false;
    }
    let mut cands: Vec<u32> = Vec::new();
    for i in (0..chain.len()).rev() {
        for j in (0..=i).rev() {
            let s = chain[i] + chain[j];
            if s > last && s <= k && !cands.contains(&s) {
                cands.push(s);
            }
        }
    }
    cands.sort_unstable_by(|a, b| b.cmp(a));
    for c in cands {
        chain.push(c);
        if search_chain(chain, k, depth) {
            return true;
        }
        chain.pop();
    }
    false
}

fn binary_chain(k: u32) -> Vec<u32> {
    let mut chain = vec![1u32];
    let bits = 32 - k.leading_zeros();
    let mut acc = 1u32;
    for b in (0..bits - 1).rev() {
        acc *= 2;
        chain.push(acc);
        if (k >> b) & 1 == 1 {
            acc += 1;
            chain.push(acc);
        }
    }
    chain
}
