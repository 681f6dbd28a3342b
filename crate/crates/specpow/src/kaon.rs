//! Scalar dynamics of the Kaon map `x ↦ λx(1 − x²)²`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpecError};
use crate::linalg::seeded_rng;

pub const DEFAULT_LAMBDA: f64 = 4.1;
pub const HIST_LOW: f64 = 0.0;
pub const HIST_HIGH: f64 = 1.2;
/// Particles start uniform on this open interval.
pub const INIT_RANGE: (f64, f64) = (0.05, 0.95);
pub const COBWEB_STEPS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    pub lambda: f64,
    pub particles: usize,
    pub burn_in: usize,
    pub collect: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA, particles: 5000, burn_in: 500, collect: 200, bins: 200, seed: 0 }
    }
}

impl MapConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: String| Err(SpecError::Config { path: path.into(), msg });
        if !(self.lambda > 0.0 && self.lambda <= 4.25) {
            return bad("lambda", format!("{} outside (0, 4.25]", self.lambda));
        }
        if self.particles == 0 || self.collect == 0 || self.bins == 0 {
            return bad("particles/collect/bins", "must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub low: f64,
    pub high: f64,
    pub counts: Vec<u64>,
    /// Samples outside `[low, high]`.
    pub overflow: u64,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.high - self.low) / self.counts.len() as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.overflow
    }

    pub fn edges(&self, i: usize) -> (f64, f64) {
        let w = self.bin_width();
        (self.low + w * i as f64, self.low + w * (i + 1) as f64)
    }

    /// Right edge of the highest occupied bin.
    pub fn support_upper(&self) -> f64 {
        self.counts.iter().rposition(|&c| c > 0).map_or(self.low, |i| self.edges(i).1)
    }

    /// Left edge of the lowest occupied bin.
    pub fn support_lower(&self) -> f64 {
        self.counts.iter().position(|&c| c > 0).map_or(self.high, |i| self.edges(i).0)
    }
}

/// Evaluated as `λ·((t·t)·x)` with `t = 1 − x²`, the association the matrix
/// iteration uses on diagonal inputs, so both agree bit for bit.
#[inline]
pub fn scalar_map(x: f64, lambda: f64) -> f64 {
    let t = 1.0 - x * x;
    lambda * ((t * t) * x)
}

/// Maximum of the map on `[0, 1]`, attained at `x = 1/√5`.
pub fn map_maximum(lambda: f64) -> f64 {
    scalar_map(1.0 / 5f64.sqrt(), lambda)
}

/// Positive fixed point solving `λ(1 − x²)² = 1`.
pub fn positive_fixed_point(lambda: f64) -> Option<f64> {
    (lambda > 1.0).then(|| (1.0 - lambda.powf(-0.5)).sqrt())
}

pub fn stationary_histogram(cfg: &MapConfig) -> Result<Histogram> {
    cfg.validate()?;
    let mut rng = seeded_rng(cfg.seed);
    let (lo, hi) = INIT_RANGE;
    let mut xs: Vec<f64> = (0..cfg.particles).map(|_| rng.random_range(lo..hi)).collect();
    for _ in 0..cfg.burn_in {
        xs.iter_mut().for_each(|x| *x = scalar_map(*x, cfg.lambda));
    }
    let mut hist = Histogram { low: HIST_LOW, high: HIST_HIGH, counts: vec![0; cfg.bins], overflow: 0 };
    let scale = cfg.bins as f64 / (HIST_HIGH - HIST_LOW);
    for _ in 0..cfg.collect {
        for x in xs.iter_mut() {
            *x = scalar_map(*x, cfg.lambda);
            if (HIST_LOW..=HIST_HIGH).contains(x) {
                let i = (((*x - HIST_LOW) * scale) as usize).min(cfg.bins - 1);
                hist.counts[i] += 1;
            } else {
                hist.overflow += 1;
            }
        }
    }
    Ok(hist)
}

/// Orbit of `x0` as `(xₜ, f(xₜ))` pairs.
pub fn cobweb_trajectory(x0: f64, lambda: f64, steps: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(steps);
    let mut x = x0;
    for _ in 0..steps {
        let fx = scalar_map(x, lambda);
        out.push((x, fx));
        x = fx;
    }
    out
}

/// `steps`-fold composition of the map at `x`.
pub fn iterate(x: f64, lambda: f64, steps: usize) -> f64 {
    (0..steps).fold(x, |acc, _| scalar_map(acc, lambda))
}
