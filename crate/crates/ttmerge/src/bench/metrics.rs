//! Accuracy, corruption error and summary statistics.

use serde::{Deserialize, Serialize};

use crate::coefficient::LambdaRecord;
use crate::error::{Error, Result};

/// Fraction of predictions equal to their label.
pub fn top1_accuracy(preds: &[usize], labels: &[u32]) -> Result<f64> {
    if preds.len() != labels.len() {
        return Err(Error::Validation(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| p == y as usize)
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Error rate relative to a base model, in percent:
/// `100 (1 - acc) / (1 - acc_base)`.
pub fn corruption_error(acc: f64, acc_base: f64) -> Result<f64> {
    for (name, v) in [("accuracy", acc), ("base accuracy", acc_base)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} {v} outside [0, 1]")));
        }
    }
    if acc_base == 1.0 {
        return Err(Error::Domain(
            "base model makes no errors; relative error is undefined".into(),
        ));
    }
    if acc == acc_base {
        return Ok(100.0);
    }
    Ok(100.0 * (1.0 - acc) / (1.0 - acc_base))
}

/// Mean of the three shifted settings; in-domain is not part of it.
pub fn mean_over_shifts(b2n: f64, noise: f64, digital: f64) -> f64 {
    if b2n == noise && noise == digital {
        return b2n;
    }
    (b2n + noise + digital) / 3.0
}

/// Sample Pearson correlation. Zero when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Validation(format!(
            "series of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Empty("correlation of empty series".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Equal-width bins over `[0, 1]`; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn histogram_of(values: impl Iterator<Item = f64>, bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0u64; bins];
    for v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("coefficient {v} outside [0, 1]")));
        }
        let b = ((v * bins as f64).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    let edges = (0..=bins).map(|i| i as f64 / bins as f64).collect();
    Ok(Histogram { edges, counts })
}

/// Histogram of the final coefficients `λ′`.
pub fn lambda_histogram(records: &[LambdaRecord], bins: usize) -> Result<Histogram> {
    histogram_of(records.iter().map(|r| r.lambda_prime), bins)
}

/// Mean, population standard deviation and histogram of coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaStats {
    pub mean: f64,
    pub std: f64,
    pub histogram: Histogram,
}

pub const HISTOGRAM_BINS: usize = 10;

impl LambdaStats {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("no coefficients".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
            histogram: histogram_of(values.iter().copied(), HISTOGRAM_BINS)?,
        })
    }
}
