//! Feature-space corruptions at five severities.
//!
//! * noise: add `N(0, σ²)` with `σ = 0.1 s`;
//! * quantize: snap to a grid of `q = 2^(6 - s)` steps per unit,
//!   `round(x q) / q`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::GaussianSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    Noise,
    Quantize,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 2] = [CorruptionKind::Noise, CorruptionKind::Quantize];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::Noise => "noise",
            CorruptionKind::Quantize => "quantize",
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise" => Ok(CorruptionKind::Noise),
            "quantize" => Ok(CorruptionKind::Quantize),
            _ => Err(Error::Validation(format!("unknown corruption {s:?}"))),
        }
    }
}

pub const SEVERITIES: std::ops::RangeInclusive<u8> = 1..=5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8) -> Result<Self> {
        if !SEVERITIES.contains(&severity) {
            return Err(Error::Validation(format!(
                "severity {severity} outside 1..=5"
            )));
        }
        Ok(Self { kind, severity })
    }

    /// Standard deviation of the added noise.
    pub fn sigma(&self) -> f64 {
        0.1 * self.severity as f64
    }

    /// Grid steps per unit.
    pub fn levels(&self) -> f64 {
        f64::powi(2.0, 6 - self.severity as i32)
    }

    /// Stream tag for this corruption's noise.
    pub fn tag(&self) -> u64 {
        let k = match self.kind {
            CorruptionKind::Noise => 1,
            CorruptionKind::Quantize => 2,
        };
        0x1000 + 16 * k + self.severity as u64
    }
}

/// Apply `spec` to a feature matrix. Quantization ignores `rng`.
pub fn corrupt<G: GaussianSource + ?Sized>(
    x: &[f32],
    spec: CorruptionSpec,
    rng: &mut G,
) -> Result<Vec<f32>> {
    CorruptionSpec::new(spec.kind, spec.severity)?;
    let out: Vec<f32> = match spec.kind {
        CorruptionKind::Noise => {
            let s = spec.sigma();
            x.iter()
                .map(|&v| (v as f64 + s * rng.next_gaussian()) as f32)
                .collect()
        }
        CorruptionKind::Quantize => {
            let q = spec.levels();
            x.iter()
                .map(|&v| ((v as f64 * q).round() / q) as f32)
                .collect()
        }
    };
    Ok(out)
}
