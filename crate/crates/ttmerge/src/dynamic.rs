//! Merged inference at test time.
//!
//! Sample-wise merging evaluates both models on an input, turns their
//! predictions into a coefficient, merges the weights once and evaluates the
//! merged model: three forward passes and one merge per sample. Batch-wise
//! merging averages the per-sample coefficients over a batch and merges once
//! for the whole batch: three batch passes and one merge per batch.
//!
//! Coefficients depend only on the two fixed models, so they can be computed
//! in an offline scan and cached ([`LambdaCache`]), leaving a single forward
//! pass at inference. Cached and online paths share every arithmetic step and
//! therefore agree bit for bit.
//!
//! Every driver reports its cost through a [`ForwardCounter`].

use std::ops::AddAssign;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficient::{batch_lambda, coefficient_for, CoefficientConfig, LambdaRecord};
use crate::container;
use crate::error::{Error, Result};
use crate::models::{Batch, Classifier, Dataset};
use crate::params::{lerp_params, ParameterMap};
use crate::prob::{softmax, LogitVector, ProbVector};

/// Batch size used when none is given.
pub const DEFAULT_BATCH_SIZE: usize = 32;

/// Model evaluations and merges performed by a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForwardCounter {
    pub sample_forwards: u64,
    pub batch_forwards: u64,
    pub merges: u64,
}

impl AddAssign for ForwardCounter {
    fn add_assign(&mut self, o: Self) {
        self.sample_forwards += o.sample_forwards;
        self.batch_forwards += o.batch_forwards;
        self.merges += o.merges;
    }
}

impl std::iter::Sum for ForwardCounter {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |mut a, b| {
            a += b;
            a
        })
    }
}

fn probs(model: &Classifier<'_>, x: &[f32]) -> Result<ProbVector> {
    Ok(softmax(&model.logits(x)?))
}

fn classify(model: &Classifier<'_>, x: &[f32]) -> Result<usize> {
    Ok(model.logits(x)?.argmax())
}

/// Classifier views of an aligned pair.
fn pair<'a>(pt: &'a ParameterMap, ft: &'a ParameterMap) -> Result<(Classifier<'a>, Classifier<'a>)> {
    pt.check_aligned(ft)?;
    Ok((Classifier::new(pt)?, Classifier::new(ft)?))
}

fn record_for(
    index: usize,
    pt: &Classifier<'_>,
    ft: &Classifier<'_>,
    x: &[f32],
    cfg: &CoefficientConfig,
) -> Result<LambdaRecord> {
    coefficient_for(index, &probs(pt, x)?, &probs(ft, x)?, cfg)
}

/// Sample-wise merged prediction for one input.
///
/// Costs three sample forwards and one merge.
pub fn t3_sample_predict(
    pt: &ParameterMap,
    ft: &ParameterMap,
    sample_index: usize,
    x: &[f32],
    cfg: &CoefficientConfig,
    counter: &mut ForwardCounter,
) -> Result<(usize, LambdaRecord)> {
    let (cpt, cft) = pair(pt, ft)?;
    let rec = record_for(sample_index, &cpt, &cft, x, cfg)?;
    let merged = lerp_params(pt, ft, rec.lambda_prime)?;
    let class = classify(&Classifier::new(&merged)?, x)?;
    counter.sample_forwards += 3;
    counter.merges += 1;
    Ok((class, rec))
}

/// Result of a batch-wise merged prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction {
    pub predictions: Vec<usize>,
    pub lambda_bar: f64,
    pub records: Vec<LambdaRecord>,
}

fn batch_records(
    cpt: &Classifier<'_>,
    cft: &Classifier<'_>,
    batch: &Batch<'_>,
    cfg: &CoefficientConfig,
) -> Result<Vec<LambdaRecord>> {
    batch
        .iter()
        .enumerate()
        .map(|(i, x)| record_for(batch.start() + i, cpt, cft, x, cfg))
        .collect()
}

fn lambda_bar(records: &[LambdaRecord]) -> Result<f64> {
    let l: Vec<f64> = records.iter().map(|r| r.lambda_prime).collect();
    batch_lambda(&l)
}

fn merged_batch_predict(
    pt: &ParameterMap,
    ft: &ParameterMap,
    batch: &Batch<'_>,
    lambda: f64,
) -> Result<Vec<usize>> {
    let merged = lerp_params(pt, ft, lambda)?;
    let model = Classifier::new(&merged)?;
    batch.iter().map(|x| classify(&model, x)).collect()
}

/// Batch-wise merged prediction: one merge at the batch-mean coefficient.
///
/// Costs three batch forwards and one merge.
pub fn t3_batch_predict(
    pt: &ParameterMap,
    ft: &ParameterMap,
    batch: &Batch<'_>,
    cfg: &CoefficientConfig,
    counter: &mut ForwardCounter,
) -> Result<BatchPrediction> {
    if batch.is_empty() {
        return Err(Error::Empty("batch".into()));
    }
    let (cpt, cft) = pair(pt, ft)?;
    let records = batch_records(&cpt, &cft, batch, cfg)?;
    let lambda_bar = lambda_bar(&records)?;
    let predictions = merged_batch_predict(pt, ft, batch, lambda_bar)?;
    counter.batch_forwards += 3;
    counter.merges += 1;
    Ok(BatchPrediction {
        predictions,
        lambda_bar,
        records,
    })
}

/// Predictions and coefficients from a dynamic run over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicRun {
    pub predictions: Vec<usize>,
    pub records: Vec<LambdaRecord>,
    /// One entry per batch for batch-wise runs, empty for sample-wise runs.
    pub batch_means: Vec<f64>,
}

/// [`t3_sample_predict`] on every row, in parallel.
pub fn predict_t3(
    pt: &ParameterMap,
    ft: &ParameterMap,
    data: &Dataset,
    cfg: &CoefficientConfig,
    counter: &mut ForwardCounter,
) -> Result<DynamicRun> {
    pt.check_aligned(ft)?;
    let results: Vec<(usize, LambdaRecord, ForwardCounter)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let mut c = ForwardCounter::default();
            let (p, r) = t3_sample_predict(pt, ft, i, data.row(i), cfg, &mut c)?;
            Ok((p, r, c))
        })
        .collect::<Result<_>>()?;
    let mut run = DynamicRun {
        predictions: Vec::with_capacity(results.len()),
        records: Vec::with_capacity(results.len()),
        batch_means: Vec::new(),
    };
    for (p, r, c) in results {
        run.predictions.push(p);
        run.records.push(r);
        *counter += c;
    }
    Ok(run)
}

/// [`t3_batch_predict`] on contiguous batches of `batch_size`, in parallel.
pub fn predict_t3_batched(
    pt: &ParameterMap,
    ft: &ParameterMap,
    data: &Dataset,
    cfg: &CoefficientConfig,
    batch_size: usize,
    counter: &mut ForwardCounter,
) -> Result<DynamicRun> {
    check_batch_size(batch_size)?;
    let batches: Vec<Batch<'_>> = data.batches(batch_size).collect();
    let results: Vec<(BatchPrediction, ForwardCounter)> = batches
        .par_iter()
        .map(|b| {
            let mut c = ForwardCounter::default();
            Ok((t3_batch_predict(pt, ft, b, cfg, &mut c)?, c))
        })
        .collect::<Result<_>>()?;
    let mut run = DynamicRun {
        predictions: Vec::with_capacity(data.len()),
        records: Vec::with_capacity(data.len()),
        batch_means: Vec::with_capacity(batches.len()),
    };
    for (b, c) in results {
        run.predictions.extend(b.predictions);
        run.records.extend(b.records);
        run.batch_means.push(b.lambda_bar);
        *counter += c;
    }
    Ok(run)
}

fn check_batch_size(batch_size: usize) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    Ok(())
}

/// Argmax of the averaged logits of both models. Two sample forwards.
pub fn ensemble_predict(
    pt: &ParameterMap,
    ft: &ParameterMap,
    x: &[f32],
    counter: &mut ForwardCounter,
) -> Result<usize> {
    let (cpt, cft) = pair(pt, ft)?;
    let class = ensemble_class(&cpt, &cft, x)?;
    counter.sample_forwards += 2;
    Ok(class)
}

fn ensemble_class(cpt: &Classifier<'_>, cft: &Classifier<'_>, x: &[f32]) -> Result<usize> {
    let (a, b) = (cpt.logits(x)?, cft.logits(x)?);
    let mean: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(u, v)| 0.5 * (u + v))
        .collect();
    Ok(LogitVector::new(mean)?.argmax())
}

/// Logit ensemble over a dataset: two batch forwards per batch.
pub fn ensemble_predict_batched(
    pt: &ParameterMap,
    ft: &ParameterMap,
    data: &Dataset,
    batch_size: usize,
    counter: &mut ForwardCounter,
) -> Result<Vec<usize>> {
    check_batch_size(batch_size)?;
    let (cpt, cft) = pair(pt, ft)?;
    let preds = (0..data.len())
        .into_par_iter()
        .map(|i| ensemble_class(&cpt, &cft, data.row(i)))
        .collect::<Result<Vec<_>>>()?;
    counter.batch_forwards += 2 * data.num_batches(batch_size) as u64;
    Ok(preds)
}

/// A single fixed model over a dataset: one batch forward per batch.
pub fn predict_single(
    params: &ParameterMap,
    data: &Dataset,
    batch_size: usize,
    counter: &mut ForwardCounter,
) -> Result<Vec<usize>> {
    check_batch_size(batch_size)?;
    let model = Classifier::new(params)?;
    let preds = (0..data.len())
        .into_par_iter()
        .map(|i| classify(&model, data.row(i)))
        .collect::<Result<Vec<_>>>()?;
    counter.batch_forwards += data.num_batches(batch_size) as u64;
    Ok(preds)
}

/// Per-sample coefficients and per-batch means from an offline scan.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaCache {
    pub per_sample: Vec<LambdaRecord>,
    pub per_batch_means: Vec<f64>,
    pub batch_size: usize,
    /// [`CoefficientConfig::digest`] of the configuration that produced it.
    pub config_digest: String,
}

const CACHE_MAGIC: &[u8; 4] = b"TTLC";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheHeader {
    batch_size: usize,
    n: usize,
    config_digest: String,
}

/// Which cached coefficient drives inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheMode {
    /// One merge per sample at its own coefficient.
    Sample,
    /// One merge per batch at the batch mean.
    Batch,
}

impl LambdaCache {
    pub fn len(&self) -> usize {
        self.per_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }

    /// Check internal consistency: sizes, ranges and batch means.
    pub fn check(&self) -> Result<()> {
        check_batch_size(self.batch_size)?;
        let n = self.per_sample.len();
        if self.per_batch_means.len() != n.div_ceil(self.batch_size) {
            return Err(Error::Corruption(format!(
                "{} batch means for {n} samples at batch size {}",
                self.per_batch_means.len(),
                self.batch_size
            )));
        }
        for (i, r) in self.per_sample.iter().enumerate() {
            if r.sample_index != i {
                return Err(Error::Corruption(format!("record {i} has index {}", r.sample_index)));
            }
            if !(0.0..=1.0).contains(&r.lambda_prime) || !(0.0..=1.0).contains(&r.lambda_raw) {
                return Err(Error::Corruption(format!("record {i} has coefficient outside [0, 1]")));
            }
        }
        for (b, chunk) in self.per_sample.chunks(self.batch_size).enumerate() {
            let mean = lambda_bar(chunk)?;
            if (mean - self.per_batch_means[b]).abs() > 1e-12 {
                return Err(Error::Corruption(format!(
                    "batch {b}: stored mean {} but records average to {mean}",
                    self.per_batch_means[b]
                )));
            }
        }
        Ok(())
    }

    /// Reject a cache built under another configuration or for another
    /// dataset size.
    pub fn validate_for(&self, cfg: &CoefficientConfig, n: usize) -> Result<()> {
        let digest = cfg.digest();
        if self.config_digest != digest {
            return Err(Error::Staleness(format!(
                "cache built for config {}, run uses {}",
                self.config_digest, digest
            )));
        }
        if self.len() != n {
            return Err(Error::Staleness(format!(
                "cache covers {} samples, dataset has {n}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&CacheHeader {
            batch_size: self.batch_size,
            n: self.per_sample.len(),
            config_digest: self.config_digest.clone(),
        })
        .expect("header serializes");
        let mut payload = Vec::with_capacity(self.per_sample.len() * 40 + self.per_batch_means.len() * 8);
        container::f64s_le(
            self.per_sample
                .iter()
                .flat_map(|r| [r.mi, r.h_pt, r.h_ft, r.lambda_raw, r.lambda_prime]),
            &mut payload,
        );
        container::f64s_le(self.per_batch_means.iter().copied(), &mut payload);
        container::encode(CACHE_MAGIC, &header, &payload)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(CACHE_MAGIC, bytes)?;
        let h: CacheHeader = serde_json::from_slice(header)
            .map_err(|e| Error::Format(format!("cache header: {e}")))?;
        if h.batch_size == 0 {
            return Err(Error::Format("cache batch size is zero".into()));
        }
        let batches = h.n.div_ceil(h.batch_size);
        let need = h
            .n
            .checked_mul(40)
            .and_then(|v| v.checked_add(batches * 8))
            .ok_or_else(|| Error::Corruption("cache header sizes overflow".into()))?;
        if payload.len() != need {
            return Err(Error::Corruption(format!(
                "cache payload is {} bytes, header implies {need}",
                payload.len()
            )));
        }
        let values = container::read_f64s(payload);
        let (recs, means) = values.split_at(h.n * 5);
        let per_sample = recs
            .chunks_exact(5)
            .enumerate()
            .map(|(i, q)| LambdaRecord {
                sample_index: i,
                mi: q[0],
                h_pt: q[1],
                h_ft: q[2],
                lambda_raw: q[3],
                lambda_prime: q[4],
            })
            .collect();
        let cache = LambdaCache {
            per_sample,
            per_batch_means: means.to_vec(),
            batch_size: h.batch_size,
            config_digest: h.config_digest,
        };
        cache.check()?;
        Ok(cache)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&container::read(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        container::write_atomic(path.as_ref(), &self.encode())
    }
}

/// Offline scan: coefficients for every sample and every batch mean.
pub fn precompute_lambdas(
    pt: &ParameterMap,
    ft: &ParameterMap,
    data: &Dataset,
    cfg: &CoefficientConfig,
    batch_size: usize,
) -> Result<LambdaCache> {
    check_batch_size(batch_size)?;
    cfg.validate()?;
    let (cpt, cft) = pair(pt, ft)?;
    let batches: Vec<Batch<'_>> = data.batches(batch_size).collect();
    let per_batch: Vec<(Vec<LambdaRecord>, f64)> = batches
        .par_iter()
        .map(|b| {
            let recs = batch_records(&cpt, &cft, b, cfg)?;
            let mean = lambda_bar(&recs)?;
            Ok((recs, mean))
        })
        .collect::<Result<_>>()?;
    let mut cache = LambdaCache {
        per_sample: Vec::with_capacity(data.len()),
        per_batch_means: Vec::with_capacity(batches.len()),
        batch_size,
        config_digest: cfg.digest(),
    };
    for (recs, mean) in per_batch {
        cache.per_sample.extend(recs);
        cache.per_batch_means.push(mean);
    }
    Ok(cache)
}

/// Inference from cached coefficients: one forward per sample (sample mode)
/// or one batch forward per batch (batch mode), with one merge each.
pub fn predict_with_cache(
    pt: &ParameterMap,
    ft: &ParameterMap,
    data: &Dataset,
    cache: &LambdaCache,
    cfg: &CoefficientConfig,
    mode: CacheMode,
    counter: &mut ForwardCounter,
) -> Result<Vec<usize>> {
    cache.validate_for(cfg, data.len())?;
    pt.check_aligned(ft)?;
    match mode {
        CacheMode::Sample => {
            let preds = (0..data.len())
                .into_par_iter()
                .map(|i| {
                    let merged = lerp_params(pt, ft, cache.per_sample[i].lambda_prime)?;
                    classify(&Classifier::new(&merged)?, data.row(i))
                })
                .collect::<Result<Vec<_>>>()?;
            counter.sample_forwards += data.len() as u64;
            counter.merges += data.len() as u64;
            Ok(preds)
        }
        CacheMode::Batch => {
            let batches: Vec<Batch<'_>> = data.batches(cache.batch_size).collect();
            let per_batch: Vec<Vec<usize>> = batches
                .par_iter()
                .zip(&cache.per_batch_means)
                .map(|(b, &l)| merged_batch_predict(pt, ft, b, l))
                .collect::<Result<_>>()?;
            counter.batch_forwards += batches.len() as u64;
            counter.merges += batches.len() as u64;
            Ok(per_batch.into_iter().flatten().collect())
        }
    }
}
