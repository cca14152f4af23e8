//! Interpolation coefficients from the two models' predictive distributions.
//!
//! The default policy maps the Jensen–Shannon divergence `I` between the
//! pretrained and expert predictions through a scaled logistic,
//!
//! ```text
//! λ = λ_min + (λ_max − λ_min) · σ(I)
//! ```
//!
//! then nudges it by `δ` toward whichever model is abnormally confident
//! (entropy below its threshold `τ`). `λ` is the weight on the expert.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::prob::{confidence_ratio, ProbVector, Stabilized};

/// How the raw coefficient is obtained from a pair of predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Policy {
    /// Logistic of the JS divergence, followed by entropy extrapolation.
    JsSigmoid,
    /// Expert entropy share, used as-is.
    EntropyRatio,
    /// Expert max-probability share, used as-is.
    ConfidenceRatio,
    /// A constant coefficient.
    Fixed(f64),
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::JsSigmoid => f.write_str("js_sigmoid"),
            Policy::EntropyRatio => f.write_str("entropy_ratio"),
            Policy::ConfidenceRatio => f.write_str("confidence_ratio"),
            Policy::Fixed(a) => write!(f, "fixed({a})"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    /// Accepts `js_sigmoid`, `entropy_ratio`, `confidence_ratio`,
    /// `fixed(α)` and `fixed:α`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "js_sigmoid" => return Ok(Policy::JsSigmoid),
            "entropy_ratio" => return Ok(Policy::EntropyRatio),
            "confidence_ratio" => return Ok(Policy::ConfidenceRatio),
            _ => {}
        }
        let alpha = s
            .strip_prefix("fixed(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("fixed:"))
            .ok_or_else(|| Error::Config(format!("unknown policy {s:?}")))?;
        let alpha: f64 = alpha
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad fixed coefficient in {s:?}")))?;
        Ok(Policy::Fixed(alpha))
    }
}

impl Serialize for Policy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Whether disagreement moves weight toward the expert (`per_eq10`, the
/// logistic rule as written) or away from it (`inverted`, `λ' ↦ 1 − λ'`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Direction {
    #[default]
    #[serde(rename = "per_eq10")]
    Standard,
    #[serde(rename = "inverted")]
    Inverted,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_eq10" => Ok(Direction::Standard),
            "inverted" => Ok(Direction::Inverted),
            _ => Err(Error::Config(format!("unknown direction {s:?}"))),
        }
    }
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

fn one() -> f64 {
    1.0
}

/// All constants of the coefficient rule.
///
/// Serializes to a JSON block with keys `lambda_min`, `lambda_max`, `delta`,
/// `tau_pt`, `tau_ft`, `policy`, `direction`. The logistic gain and centre
/// are only written when changed from their defaults of 1 and 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientConfig {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub delta: f64,
    pub tau_pt: f64,
    pub tau_ft: f64,
    pub policy: Policy,
    pub direction: Direction,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub sigmoid_gain: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub sigmoid_center: f64,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            lambda_min: 0.0,
            lambda_max: 1.0,
            delta: 0.5,
            tau_pt: 0.05,
            tau_ft: 0.05,
            policy: Policy::JsSigmoid,
            direction: Direction::Standard,
            sigmoid_gain: 1.0,
            sigmoid_center: 0.0,
        }
    }
}

impl CoefficientConfig {
    pub fn with_policy(policy: Policy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        unit("lambda_min", self.lambda_min)?;
        unit("lambda_max", self.lambda_max)?;
        unit("delta", self.delta)?;
        if self.lambda_min > self.lambda_max {
            return Err(Error::Config(format!(
                "lambda_min {} exceeds lambda_max {}",
                self.lambda_min, self.lambda_max
            )));
        }
        for (name, tau) in [("tau_pt", self.tau_pt), ("tau_ft", self.tau_ft)] {
            if !(tau >= 0.0 && tau.is_finite()) {
                return Err(Error::Config(format!("{name} = {tau} must be >= 0")));
            }
        }
        if !self.sigmoid_gain.is_finite() || !self.sigmoid_center.is_finite() {
            return Err(Error::Config("sigmoid gain and centre must be finite".into()));
        }
        if let Policy::Fixed(a) = self.policy {
            unit("fixed coefficient", a)?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding, every field included.
    pub fn digest(&self) -> String {
        let canonical = serde_json::json!({
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "delta": self.delta,
            "tau_pt": self.tau_pt,
            "tau_ft": self.tau_ft,
            "policy": self.policy.to_string(),
            "direction": self.direction,
            "sigmoid_gain": self.sigmoid_gain,
            "sigmoid_center": self.sigmoid_center,
        });
        let hash = Sha256::digest(canonical.to_string().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Everything computed for one sample on the way to its coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaRecord {
    pub sample_index: usize,
    /// JS divergence between the two predictions (nats).
    pub mi: f64,
    pub h_pt: f64,
    pub h_ft: f64,
    pub lambda_raw: f64,
    pub lambda_prime: f64,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// `λ_min + (λ_max − λ_min)·σ(gain·(I − centre))`.
pub fn lambda_from_mi(mi: f64, cfg: &CoefficientConfig) -> Result<f64> {
    if mi < -1e-9 || mi.is_nan() {
        return Err(Error::Domain(format!("divergence {mi} is negative")));
    }
    let s = sigmoid(cfg.sigmoid_gain * (mi.max(0.0) - cfg.sigmoid_center));
    Ok(cfg.lambda_min + (cfg.lambda_max - cfg.lambda_min) * s)
}

/// Entropy-triggered correction of `λ`.
///
/// An over-confident expert (`H_ft < τ_ft`) pushes `λ` up by `δ`; otherwise
/// an over-confident pretrained model (`H_pt < τ_pt`) pushes it down. The
/// result is clamped to `[0, 1]`.
pub fn extrapolate(lambda: f64, h_pt: f64, h_ft: f64, cfg: &CoefficientConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("lambda {lambda} outside [0, 1]")));
    }
    if h_ft < cfg.tau_ft {
        Ok((lambda + cfg.delta).min(1.0))
    } else if h_pt < cfg.tau_pt {
        Ok((lambda - cfg.delta).max(0.0))
    } else {
        Ok(lambda)
    }
}

/// Pairwise (cascade) sum; keeps rounding error `O(log n)`.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Arithmetic mean of a batch's coefficients.
pub fn batch_lambda(lambdas: &[f64]) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(Error::Empty("batch of coefficients".into()));
    }
    if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(Error::Domain(format!("coefficient {l} outside [0, 1]")));
    }
    if lambdas.iter().all(|&l| l == lambdas[0]) {
        return Ok(lambdas[0]);
    }
    Ok(pairwise_sum(lambdas) / lambdas.len() as f64)
}

/// Entropy-ratio coefficient, used directly as the weight on the expert.
pub fn dawin_lambda(p_pt: &ProbVector, p_ft: &ProbVector) -> Result<f64> {
    Stabilized::default().entropy_ratio(p_pt, p_ft)
}

/// Evaluate `cfg.policy` for one sample.
///
/// Extrapolation only applies to [`Policy::JsSigmoid`]; other policies pass
/// `λ_raw` through. [`Direction::Inverted`] reflects the final value.
pub fn coefficient_for(
    sample_index: usize,
    p_pt: &ProbVector,
    p_ft: &ProbVector,
    cfg: &CoefficientConfig,
) -> Result<LambdaRecord> {
    let st = Stabilized::default();
    let mi = st.js_divergence(p_pt, p_ft)?;
    let h_pt = st.entropy(p_pt);
    let h_ft = st.entropy(p_ft);
    let (lambda_raw, lambda_prime) = match cfg.policy {
        Policy::JsSigmoid => {
            let raw = lambda_from_mi(mi, cfg)?;
            (raw, extrapolate(raw, h_pt, h_ft, cfg)?)
        }
        Policy::EntropyRatio => {
            let r = st.entropy_ratio(p_pt, p_ft)?;
            (r, r)
        }
        Policy::ConfidenceRatio => {
            let r = confidence_ratio(p_pt, p_ft)?;
            (r, r)
        }
        Policy::Fixed(a) => (a, a),
    };
    let lambda_prime = match cfg.direction {
        Direction::Standard => lambda_prime,
        Direction::Inverted => 1.0 - lambda_prime,
    };
    Ok(LambdaRecord {
        sample_index,
        mi,
        h_pt,
        h_ft,
        lambda_raw,
        lambda_prime,
    })
}
