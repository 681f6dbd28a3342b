use std::fmt;
use std::str::FromStr;

use half::{bf16, f16};
use serde::{Deserialize, Serialize};

use crate::error::SpecError;
use crate::linalg::Mat;

/// Element precision of a run. Emulated modes keep `f64` storage and round
/// every primitive result to the target format (round-to-nearest-even).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F64,
    F32,
    F16e,
    Bf16e,
}

impl Precision {
    pub const ALL: [Precision; 4] = [Precision::F64, Precision::F32, Precision::F16e, Precision::Bf16e];

    #[inline]
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::F64 => x,
            Precision::F32 => x as f32 as f64,
            Precision::F16e => f16::from_f64(x).to_f64(),
            Precision::Bf16e => bf16::from_f64(x).to_f64(),
        }
    }

    pub fn round_mat(self, m: Mat) -> Mat {
        if self == Precision::F64 {
            return m;
        }
        let mut m = m;
        for v in m.data_mut() {
            *v = self.round(*v);
        }
        m
    }

    /// Unit roundoff of the format.
    pub fn unit_roundoff(self) -> f64 {
        match self {
            Precision::F64 => f64::EPSILON / 2.0,
            Precision::F32 => f32::EPSILON as f64 / 2.0,
            Precision::F16e => f16::EPSILON.to_f64() / 2.0,
            Precision::Bf16e => bf16::EPSILON.to_f64() / 2.0,
        }
    }

    /// Tag byte used by the SMAT file format.
    pub fn tag(self) -> u8 {
        match self {
            Precision::F64 => 0,
            Precision::F32 => 1,
            Precision::F16e => 2,
            Precision::Bf16e => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
            Precision::F16e => "f16e",
            Precision::Bf16e => "bf16e",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Precision {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "f64" | "double" => Ok(Precision::F64),
            "f32" | "single" => Ok(Precision::F32),
            "f16e" | "f16" => Ok(Precision::F16e),
            "bf16e" | "bf16" => Ok(Precision::Bf16e),
            other => Err(SpecError::Config { path: "precision".into(), msg: format!("unknown precision {other}") }),
        }
    }
}
