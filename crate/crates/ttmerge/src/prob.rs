//! Probability-space quantities over a model's predictive distribution.
//!
//! All logarithms are natural, so every entropy and divergence is in nats.
//! Every `ln` is stabilized with an additive `ε` (default [`EPS`]), matching
//! the usual `p * log(p + eps)` formulation.

use crate::error::{Error, Result};

/// Additive stabilizer inside every logarithm.
pub const EPS: f64 = 1e-12;

/// Tolerance on `Σ p = 1` when validating a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-6;

/// Raw class scores. At least two classes, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.len() < 2 {
            return Err(Error::Domain(format!("need at least 2 classes, got {}", z.len())));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite logit".into()));
        }
        Ok(Self(z))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest score; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.len() < 2 {
            return Err(Error::Domain(format!("need at least 2 classes, got {}", p.len())));
        }
        if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("probability outside [0, 1]".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!("probabilities sum to {s}")));
        }
        Ok(Self(p))
    }

    pub fn uniform(classes: usize) -> Result<Self> {
        Self::new(vec![1.0 / classes as f64; classes])
    }

    pub fn one_hot(classes: usize, hot: usize) -> Result<Self> {
        if hot >= classes {
            return Err(Error::Domain(format!("class {hot} out of range {classes}")));
        }
        let mut p = vec![0.0; classes];
        p[hot] = 1.0;
        Self::new(p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// The equal-weight mixture `(p + q) / 2`.
    pub fn midpoint(&self, other: &ProbVector) -> Result<ProbVector> {
        same_len(self, other)?;
        Ok(ProbVector(
            self.0.iter().zip(&other.0).map(|(a, b)| 0.5 * (a + b)).collect(),
        ))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn same_len(p: &ProbVector, q: &ProbVector) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::Domain(format!(
            "distributions over {} and {} classes",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// Max-shifted softmax.
pub fn softmax(z: &LogitVector) -> ProbVector {
    let z = z.as_slice();
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    ProbVector(e.into_iter().map(|v| v / s).collect())
}

/// Divergence and entropy evaluations sharing one log stabilizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stabilized {
    pub eps: f64,
}

impl Default for Stabilized {
    fn default() -> Self {
        Self { eps: EPS }
    }
}

impl Stabilized {
    pub fn new(eps: f64) -> Self {
        Self { eps }
    }

    /// `−Σ p ln(p + ε)`, floored at zero.
    pub fn entropy(&self, p: &ProbVector) -> f64 {
        let h: f64 = -p
            .as_slice()
            .iter()
            .map(|&pi| pi * (pi + self.eps).ln())
            .sum::<f64>();
        h.max(0.0)
    }

    /// `Σ p ln((p + ε) / (q + ε))`.
    pub fn kl_divergence(&self, p: &ProbVector, q: &ProbVector) -> Result<f64> {
        same_len(p, q)?;
        Ok(p.as_slice()
            .iter()
            .zip(q.as_slice())
            .map(|(&pi, &qi)| pi * ((pi + self.eps) / (qi + self.eps)).ln())
            .sum())
    }

    /// Jensen–Shannon divergence as the mean KL to the mixture.
    pub fn js_divergence(&self, p: &ProbVector, q: &ProbVector) -> Result<f64> {
        let m = p.midpoint(q)?;
        let js = 0.5 * (self.kl_divergence(p, &m)? + self.kl_divergence(q, &m)?);
        Ok(js.max(0.0))
    }

    /// Jensen–Shannon divergence as the entropy gap `H(m) − [H(p) + H(q)]/2`.
    pub fn js_via_entropy(&self, p: &ProbVector, q: &ProbVector) -> Result<f64> {
        let m = p.midpoint(q)?;
        let js = self.entropy(&m) - 0.5 * (self.entropy(p) + self.entropy(q));
        Ok(js.max(0.0))
    }

    /// The expert's share of total entropy, `H(p_ft) / (H(p_pt) + H(p_ft))`.
    ///
    /// Returns 0.5 when both entropies vanish.
    pub fn entropy_ratio(&self, p_pt: &ProbVector, p_ft: &ProbVector) -> Result<f64> {
        same_len(p_pt, p_ft)?;
        let (h_pt, h_ft) = (self.entropy(p_pt), self.entropy(p_ft));
        Ok(share(h_pt, h_ft))
    }

    /// The expert's share of total cross-entropy against label `y`.
    ///
    /// Label-dependent: a diagnostic only, never usable at test time.
    pub fn xentropy_ratio(&self, p_pt: &ProbVector, p_ft: &ProbVector, y: usize) -> Result<f64> {
        same_len(p_pt, p_ft)?;
        if y >= p_pt.len() {
            return Err(Error::Domain(format!(
                "label {y} out of range for {} classes",
                p_pt.len()
            )));
        }
        let nll = |p: &ProbVector| (-(p.as_slice()[y] + self.eps).ln()).max(0.0);
        Ok(share(nll(p_pt), nll(p_ft)))
    }
}

/// `b / (a + b)` with the 0/0 case mapped to one half.
fn share(a: f64, b: f64) -> f64 {
    if a < 1e-12 && b < 1e-12 {
        0.5
    } else {
        b / (a + b)
    }
}

pub fn entropy(p: &ProbVector) -> f64 {
    Stabilized::default().entropy(p)
}

pub fn kl_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    Stabilized::default().kl_divergence(p, q)
}

pub fn js_divergence(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    Stabilized::default().js_divergence(p, q)
}

pub fn js_via_entropy(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    Stabilized::default().js_via_entropy(p, q)
}

pub fn entropy_ratio(p_pt: &ProbVector, p_ft: &ProbVector) -> Result<f64> {
    Stabilized::default().entropy_ratio(p_pt, p_ft)
}

pub fn xentropy_ratio(p_pt: &ProbVector, p_ft: &ProbVector, y: usize) -> Result<f64> {
    Stabilized::default().xentropy_ratio(p_pt, p_ft, y)
}

/// `max(p_ft) / (max(p_pt) + max(p_ft))`.
pub fn confidence_ratio(p_pt: &ProbVector, p_ft: &ProbVector) -> Result<f64> {
    same_len(p_pt, p_ft)?;
    let (a, b) = (p_pt.max(), p_ft.max());
    Ok(b / (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn pv(p: &[f64]) -> ProbVector {
        ProbVector::new(p.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&LogitVector::new(vec![0.0, 0.0]).unwrap());
        assert_eq!(p.as_slice(), &[0.5, 0.5]);
        let p = softmax(&LogitVector::new(vec![LN_2, 0.0]).unwrap());
        assert!((p.as_slice()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.as_slice()[1] - 1.0 / 3.0).abs() < 1e-12);
        let big = softmax(&LogitVector::new(vec![1000.0, 999.0, -1000.0]).unwrap());
        assert!((big.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constructors_validate() {
        assert!(LogitVector::new(vec![1.0]).is_err());
        assert!(LogitVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::one_hot(2, 2).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!(entropy(&pv(&[1.0, 0.0, 0.0])).abs() < 1e-9);
        assert!((entropy(&ProbVector::uniform(2).unwrap()) - LN_2).abs() < 1e-6);
        assert!((entropy(&ProbVector::uniform(4).unwrap()) - 4f64.ln()).abs() < 1e-6);
    }

    #[test]
    fn kl_examples() {
        let p = pv(&[0.3, 0.7]);
        assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-9);
        assert!((kl_divergence(&pv(&[1.0, 0.0]), &pv(&[0.5, 0.5])).unwrap() - LN_2).abs() < 1e-6);
        // 0.5 ln(0.5/0.25) + 0.5 ln(0.5/0.75), evaluated directly.
        let oracle = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert!((oracle - 0.143841036).abs() < 1e-8);
        let got = kl_divergence(&pv(&[0.5, 0.5]), &pv(&[0.25, 0.75])).unwrap();
        assert!((got - oracle).abs() < 1e-5);
        assert!(kl_divergence(&pv(&[0.5, 0.5]), &ProbVector::uniform(3).unwrap()).is_err());
    }

    #[test]
    fn js_examples() {
        let p = pv(&[0.2, 0.3, 0.5]);
        assert!(js_divergence(&p, &p).unwrap() < 1e-9);
        assert!(js_via_entropy(&p, &p).unwrap() < 1e-8);
        let (a, b) = (pv(&[1.0, 0.0]), pv(&[0.0, 1.0]));
        assert!((js_divergence(&a, &b).unwrap() - LN_2).abs() < 1e-6);
        assert!((js_via_entropy(&a, &b).unwrap() - LN_2).abs() < 1e-6);
    }

    #[test]
    fn entropy_ratio_examples() {
        let p = pv(&[0.7, 0.3]);
        let q = pv(&[0.3, 0.7]);
        assert!((entropy_ratio(&p, &q).unwrap() - 0.5).abs() < 1e-12);
        let one_hot = pv(&[1.0, 0.0]);
        let uni = ProbVector::uniform(2).unwrap();
        assert!(entropy_ratio(&uni, &one_hot).unwrap() < 1e-6);
        assert!((entropy_ratio(&one_hot, &uni).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(entropy_ratio(&one_hot, &one_hot).unwrap(), 0.5);
    }

    #[test]
    fn xentropy_ratio_examples() {
        let p = pv(&[0.6, 0.4]);
        assert!((xentropy_ratio(&p, &p, 0).unwrap() - 0.5).abs() < 1e-12);
        let perfect = pv(&[1.0, 0.0]);
        assert!(xentropy_ratio(&pv(&[0.5, 0.5]), &perfect, 0).unwrap() < 1e-9);
        // ln 2 / (ln(10/9) + ln 2), evaluated directly.
        let oracle = LN_2 / ((10.0f64 / 9.0).ln() + LN_2);
        assert!((oracle - 0.868).abs() < 1e-3);
        let got = xentropy_ratio(&pv(&[0.9, 0.1]), &pv(&[0.5, 0.5]), 0).unwrap();
        assert!((got - oracle).abs() < 1e-9);
        assert!(xentropy_ratio(&p, &p, 2).is_err());
    }

    #[test]
    fn confidence_ratio_examples() {
        let p = pv(&[0.6, 0.4]);
        assert_eq!(confidence_ratio(&p, &pv(&[0.4, 0.6])).unwrap(), 0.5);
        let r = confidence_ratio(&p, &pv(&[0.9, 0.1])).unwrap();
        assert!((r - 0.6).abs() < 1e-12);
    }

    #[test]
    fn confident_disagreement_is_visible_to_js_only() {
        let p = pv(&[0.99, 0.01]);
        let q = pv(&[0.01, 0.99]);
        assert!((entropy_ratio(&p, &q).unwrap() - 0.5).abs() < 1e-6);
        assert!(js_divergence(&p, &q).unwrap() > 0.9 * LN_2);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }
}
