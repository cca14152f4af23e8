//! Method evaluation over every test setting of a scenario.
//!
//! Settings are the in-domain set, the novel-class set (`b2n`) and the two
//! corruption kinds. A corruption kind's accuracy is the mean over its five
//! severities, and its relative error is computed from those means. Relative
//! errors use the pretrained model as base.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::corrupt::CorruptionKind;
use super::metrics::{corruption_error, mean_over_shifts, top1_accuracy, LambdaStats};
use super::scenario::ShiftScenario;
use crate::coefficient::{CoefficientConfig, Policy};
use crate::dynamic::{
    ensemble_predict_batched, predict_single, predict_t3, predict_t3_batched, predict_with_cache,
    CacheMode, ForwardCounter, LambdaCache,
};
use crate::error::{Error, Result};
use crate::models::Dataset;
use crate::params::{
    lerp_params, mixup_merge, slerp_params, soup, task_arithmetic, ties_merge, ParameterMap,
};
use crate::rng::SplitMix64;

pub const DEFAULT_TASK_ARITH_SCALE: f64 = 0.3;
pub const DEFAULT_SLERP_T: f64 = 0.5;
pub const DEFAULT_TIES_K: f64 = 0.2;
pub const DEFAULT_TIES_SCALE: f64 = 1.0;
pub const DEFAULT_MIXUP_ALPHA: f64 = 0.5;

const TAG_MIXUP: u64 = 0x2000;

/// A method to evaluate.
///
/// Parsed from `pretrained`, `expert`, `ensemble`, `soup`,
/// `task_arith[(s)]`, `slerp[(t)]`, `ties[(k)]`, `mixup[(α)]`, `dawin`,
/// `t3`, `t3_batch` and `fixed(α)` (or `fixed:α`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodSpec {
    Pretrained,
    Expert,
    Ensemble,
    Soup,
    TaskArith { scale: f64 },
    Slerp { t: f64 },
    Ties { k: f64, scale: f64 },
    Mixup { alpha: f64 },
    Dawin,
    T3,
    T3Batch,
    Fixed(f64),
}

impl MethodSpec {
    /// The methods compared in the benchmark tables, with default settings.
    pub fn all() -> Vec<MethodSpec> {
        vec![
            MethodSpec::Pretrained,
            MethodSpec::Expert,
            MethodSpec::Ensemble,
            MethodSpec::Soup,
            MethodSpec::TaskArith {
                scale: DEFAULT_TASK_ARITH_SCALE,
            },
            MethodSpec::Slerp { t: DEFAULT_SLERP_T },
            MethodSpec::Ties {
                k: DEFAULT_TIES_K,
                scale: DEFAULT_TIES_SCALE,
            },
            MethodSpec::Mixup {
                alpha: DEFAULT_MIXUP_ALPHA,
            },
            MethodSpec::Dawin,
            MethodSpec::T3,
            MethodSpec::T3Batch,
        ]
    }

    /// Parse a comma-separated list.
    pub fn parse_list(s: &str) -> Result<Vec<MethodSpec>> {
        let v: Vec<MethodSpec> = s
            .split(',')
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(str::parse)
            .collect::<Result<_>>()?;
        if v.is_empty() {
            return Err(Error::Validation("empty method list".into()));
        }
        Ok(v)
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::Pretrained => f.write_str("pretrained"),
            MethodSpec::Expert => f.write_str("expert"),
            MethodSpec::Ensemble => f.write_str("ensemble"),
            MethodSpec::Soup => f.write_str("soup"),
            MethodSpec::TaskArith { scale } => write!(f, "task_arith({scale})"),
            MethodSpec::Slerp { t } => write!(f, "slerp({t})"),
            MethodSpec::Ties { k, scale } if *scale == DEFAULT_TIES_SCALE => write!(f, "ties({k})"),
            MethodSpec::Ties { k, scale } => write!(f, "ties({k},{scale})"),
            MethodSpec::Mixup { alpha } => write!(f, "mixup({alpha})"),
            MethodSpec::Dawin => f.write_str("dawin"),
            MethodSpec::T3 => f.write_str("t3"),
            MethodSpec::T3Batch => f.write_str("t3_batch"),
            MethodSpec::Fixed(a) => write!(f, "fixed({a})"),
        }
    }
}

fn parse_args(name: &str, s: &str) -> Result<Option<Vec<f64>>> {
    let Some(rest) = s.strip_prefix(name) else {
        return Ok(None);
    };
    if rest.is_empty() {
        return Ok(Some(vec![]));
    }
    let inner = rest
        .strip_prefix('(')
        .and_then(|r| r.strip_suffix(')'))
        .or_else(|| rest.strip_prefix(':'))
        .ok_or_else(|| Error::Validation(format!("unknown method {s:?}")))?;
    inner
        .split(',')
        .map(|a| {
            a.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Validation(format!("bad argument {a:?} in {s:?}")))
        })
        .collect::<Result<_>>()
        .map(Some)
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let plain = match s {
            "pretrained" => Some(MethodSpec::Pretrained),
            "expert" => Some(MethodSpec::Expert),
            "ensemble" => Some(MethodSpec::Ensemble),
            "soup" => Some(MethodSpec::Soup),
            "dawin" => Some(MethodSpec::Dawin),
            "t3" => Some(MethodSpec::T3),
            "t3_batch" => Some(MethodSpec::T3Batch),
            _ => None,
        };
        if let Some(m) = plain {
            return Ok(m);
        }
        let unit = |v: f64| -> Result<f64> {
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(Error::Validation(format!("{s}: argument must lie in [0, 1]")))
            }
        };
        let arity = |args: &[f64], max: usize| -> Result<()> {
            if args.len() > max {
                return Err(Error::Validation(format!("{s}: too many arguments")));
            }
            Ok(())
        };
        if let Some(a) = parse_args("task_arith", s)? {
            arity(&a, 1)?;
            return Ok(MethodSpec::TaskArith {
                scale: a.first().copied().unwrap_or(DEFAULT_TASK_ARITH_SCALE),
            });
        }
        if let Some(a) = parse_args("slerp", s)? {
            arity(&a, 1)?;
            return Ok(MethodSpec::Slerp {
                t: unit(a.first().copied().unwrap_or(DEFAULT_SLERP_T))?,
            });
        }
        if let Some(a) = parse_args("ties", s)? {
            arity(&a, 2)?;
            let k = a.first().copied().unwrap_or(DEFAULT_TIES_K);
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::Validation(format!("{s}: k must lie in (0, 1]")));
            }
            return Ok(MethodSpec::Ties {
                k,
                scale: a.get(1).copied().unwrap_or(DEFAULT_TIES_SCALE),
            });
        }
        if let Some(a) = parse_args("mixup", s)? {
            arity(&a, 1)?;
            let alpha = a.first().copied().unwrap_or(DEFAULT_MIXUP_ALPHA);
            if alpha <= 0.0 {
                return Err(Error::Validation(format!("{s}: alpha must be > 0")));
            }
            return Ok(MethodSpec::Mixup { alpha });
        }
        if let Some(a) = parse_args("fixed", s)? {
            if a.len() != 1 {
                return Err(Error::Validation(format!("{s}: fixed takes one coefficient")));
            }
            return Ok(MethodSpec::Fixed(unit(a[0])?));
        }
        Err(Error::Validation(format!("unknown method {s:?}")))
    }
}

/// Names of the test settings.
pub mod setting {
    pub const IN_DOMAIN: &str = "in_domain";
    pub const B2N: &str = "b2n";
    pub const NOISE: &str = "noise";
    pub const QUANTIZE: &str = "quantize";
    /// Mean of the three shifted settings.
    pub const MEAN: &str = "mean";
}

/// Every individual test set: in-domain, novel, then each corruption and
/// severity (`noise_s1` … `quantize_s5`).
pub fn test_sets(s: &ShiftScenario) -> Vec<(String, &Dataset)> {
    let mut v = vec![
        (setting::IN_DOMAIN.to_string(), &s.test_in_domain),
        (setting::B2N.to_string(), &s.test_novel),
    ];
    for c in &s.test_corrupted {
        v.push((format!("{}_s{}", c.spec.kind, c.spec.severity), &c.data));
    }
    v
}

/// Result of evaluating one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    /// Top-1 accuracy in `[0, 1]` per setting, plus per severity.
    pub accuracy: BTreeMap<String, f64>,
    /// Error relative to the pretrained model, in percent.
    pub err: BTreeMap<String, f64>,
    pub mean_shift_acc: f64,
    pub mce: f64,
    /// Coefficients applied by a dynamic method, pooled over all test sets.
    pub lambda_stats: Option<LambdaStats>,
    /// Coefficient of a static merge toward the expert, when it has one.
    pub static_lambda: Option<f64>,
    /// Cost of the in-domain evaluation.
    pub counter: ForwardCounter,
    /// Cost over all test sets.
    pub total_counter: ForwardCounter,
}

/// Settings shared by every method of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub coefficient: CoefficientConfig,
    pub batch_size: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn new(coefficient: CoefficientConfig, batch_size: usize, seed: u64) -> Self {
        Self {
            coefficient,
            batch_size,
            seed,
        }
    }
}

/// Per-set predictions and what they cost.
struct SetOutcome {
    preds: Vec<usize>,
    lambdas: Vec<f64>,
    counter: ForwardCounter,
}

enum Predictor {
    Single(ParameterMap),
    Ensemble,
    Dynamic { policy: Policy, batched: bool },
}

fn predictor(
    m: MethodSpec,
    pt: &ParameterMap,
    ft: &ParameterMap,
    cfg: &BenchConfig,
) -> Result<(Predictor, Option<f64>)> {
    Ok(match m {
        MethodSpec::Pretrained => (Predictor::Single(pt.clone()), None),
        MethodSpec::Expert => (Predictor::Single(ft.clone()), None),
        MethodSpec::Ensemble => (Predictor::Ensemble, None),
        MethodSpec::Soup => (Predictor::Single(soup(pt, ft)?), Some(0.5)),
        MethodSpec::TaskArith { scale } => {
            (Predictor::Single(task_arithmetic(pt, ft, scale)?), Some(scale))
        }
        MethodSpec::Slerp { t } => (Predictor::Single(slerp_params(pt, ft, t)?), Some(t)),
        MethodSpec::Ties { k, scale } => (Predictor::Single(ties_merge(pt, ft, k, scale)?), None),
        MethodSpec::Mixup { alpha } => {
            let mut rng = SplitMix64::derive(cfg.seed, TAG_MIXUP);
            let (m, l) = mixup_merge(pt, ft, &mut rng, alpha)?;
            (Predictor::Single(m), Some(l))
        }
        MethodSpec::Fixed(a) => (Predictor::Single(lerp_params(pt, ft, a)?), Some(a)),
        MethodSpec::Dawin => (
            Predictor::Dynamic {
                policy: Policy::EntropyRatio,
                batched: false,
            },
            None,
        ),
        MethodSpec::T3 => (
            Predictor::Dynamic {
                policy: cfg.coefficient.policy,
                batched: false,
            },
            None,
        ),
        MethodSpec::T3Batch => (
            Predictor::Dynamic {
                policy: cfg.coefficient.policy,
                batched: true,
            },
            None,
        ),
    })
}

fn run_set(
    p: &Predictor,
    pt: &ParameterMap,
    ft: &ParameterMap,
    data: &Dataset,
    cfg: &BenchConfig,
    cache: Option<&LambdaCache>,
) -> Result<SetOutcome> {
    let mut counter = ForwardCounter::default();
    let bs = cfg.batch_size;
    let (preds, lambdas) = match p {
        Predictor::Single(m) => (predict_single(m, data, bs, &mut counter)?, vec![]),
        Predictor::Ensemble => (ensemble_predict_batched(pt, ft, data, bs, &mut counter)?, vec![]),
        Predictor::Dynamic { policy, batched } => {
            let c = CoefficientConfig {
                policy: *policy,
                ..cfg.coefficient.clone()
            };
            match (cache, batched) {
                (Some(cache), true) => {
                    if cache.batch_size != bs {
                        return Err(Error::Staleness(format!(
                            "cache batch size {} differs from run batch size {bs}",
                            cache.batch_size
                        )));
                    }
                    let preds = predict_with_cache(pt, ft, data, cache, &c, CacheMode::Batch, &mut counter)?;
                    (preds, cache.per_batch_means.clone())
                }
                (Some(cache), false) => {
                    let preds = predict_with_cache(pt, ft, data, cache, &c, CacheMode::Sample, &mut counter)?;
                    (preds, cache.per_sample.iter().map(|r| r.lambda_prime).collect())
                }
                (None, true) => {
                    let run = predict_t3_batched(pt, ft, data, &c, bs, &mut counter)?;
                    (run.predictions, run.batch_means)
                }
                (None, false) => {
                    let run = predict_t3(pt, ft, data, &c, &mut counter)?;
                    (run.predictions, run.records.iter().map(|r| r.lambda_prime).collect())
                }
            }
        }
    };
    Ok(SetOutcome {
        preds,
        lambdas,
        counter,
    })
}

/// Accuracy per individual test set, for one method.
struct RawResult {
    accuracy: BTreeMap<String, f64>,
    lambdas: Vec<f64>,
    static_lambda: Option<f64>,
    counter: ForwardCounter,
    total_counter: ForwardCounter,
}

fn evaluate(
    m: MethodSpec,
    scenario: &ShiftScenario,
    pt: &ParameterMap,
    ft: &ParameterMap,
    cfg: &BenchConfig,
    caches: Option<&BTreeMap<String, LambdaCache>>,
) -> Result<RawResult> {
    let (p, static_lambda) = predictor(m, pt, ft, cfg)?;
    // Caches hold coefficients of the configured policy only.
    let use_cache = matches!(m, MethodSpec::T3 | MethodSpec::T3Batch);
    let mut res = RawResult {
        accuracy: BTreeMap::new(),
        lambdas: Vec::new(),
        static_lambda,
        counter: ForwardCounter::default(),
        total_counter: ForwardCounter::default(),
    };
    for (name, data) in test_sets(scenario) {
        let cache = match caches {
            Some(c) if use_cache => Some(
                c.get(&name)
                    .ok_or_else(|| Error::Staleness(format!("no cached coefficients for {name}")))?,
            ),
            _ => None,
        };
        let out = run_set(&p, pt, ft, data, cfg, cache)?;
        res.accuracy.insert(name.clone(), top1_accuracy(&out.preds, data.labels())?);
        res.lambdas.extend(out.lambdas);
        if name == setting::IN_DOMAIN {
            res.counter = out.counter;
        }
        res.total_counter += out.counter;
    }
    for kind in CorruptionKind::ALL {
        let prefix = format!("{kind}_s");
        let accs: Vec<f64> = res
            .accuracy
            .iter()
            .filter(|(k, _)| k.starts_with(&prefix))
            .map(|(_, &v)| v)
            .collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        res.accuracy.insert(kind.name().to_string(), mean);
    }
    Ok(res)
}

/// Evaluate `methods` on every test setting of `scenario`.
///
/// `caches`, keyed by test-set name (see [`test_sets`]), replace online
/// coefficient computation for `t3` and `t3_batch`.
pub fn run_benchmark(
    scenario: &ShiftScenario,
    pt: &ParameterMap,
    ft: &ParameterMap,
    methods: &[MethodSpec],
    cfg: &BenchConfig,
    caches: Option<&BTreeMap<String, LambdaCache>>,
) -> Result<Vec<EvalReport>> {
    cfg.coefficient.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    if methods.is_empty() {
        return Err(Error::Validation("no methods to evaluate".into()));
    }
    pt.check_aligned(ft)?;
    let base = evaluate(MethodSpec::Pretrained, scenario, pt, ft, cfg, None)?;
    methods
        .iter()
        .map(|&m| {
            let r = if m == MethodSpec::Pretrained {
                evaluate(m, scenario, pt, ft, cfg, None)?
            } else {
                evaluate(m, scenario, pt, ft, cfg, caches)?
            };
            let mut err = BTreeMap::new();
            for (k, &acc) in &r.accuracy {
                err.insert(k.clone(), corruption_error(acc, base.accuracy[k])?);
            }
            let a = |k: &str| r.accuracy[k];
            let e = |k: &str| err[k];
            let mean_shift_acc = mean_over_shifts(a(setting::B2N), a(setting::NOISE), a(setting::QUANTIZE));
            let mce = mean_over_shifts(e(setting::B2N), e(setting::NOISE), e(setting::QUANTIZE));
            Ok(EvalReport {
                method: m.to_string(),
                accuracy: r.accuracy,
                err,
                mean_shift_acc,
                mce,
                lambda_stats: if r.lambdas.is_empty() {
                    None
                } else {
                    Some(LambdaStats::of(&r.lambdas)?)
                },
                static_lambda: r.static_lambda,
                counter: r.counter,
                total_counter: r.total_counter,
            })
        })
        .collect()
}

/// A complete benchmark run as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub seed: u64,
    pub batch_size: usize,
    pub config: CoefficientConfig,
    pub config_digest: String,
    pub methods: Vec<EvalReport>,
}

impl BenchmarkReport {
    pub fn new(cfg: &BenchConfig, methods: Vec<EvalReport>) -> Self {
        Self {
            seed: cfg.seed,
            batch_size: cfg.batch_size,
            config: cfg.coefficient.clone(),
            config_digest: cfg.coefficient.digest(),
            methods,
        }
    }

    /// Pretty JSON with every object's keys in sorted order.
    pub fn to_json(&self) -> String {
        to_canonical_json(self)
    }

    /// One row per method and setting: `method,setting,accuracy,err`.
    /// The `mean` row carries the mean shifted accuracy and the mean
    /// relative error.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,setting,accuracy,err\n");
        for m in &self.methods {
            for (k, acc) in &m.accuracy {
                out.push_str(&format!("{},{},{},{}\n", m.method, k, acc, m.err[k]));
            }
            out.push_str(&format!(
                "{},{},{},{}\n",
                m.method,
                setting::MEAN,
                m.mean_shift_acc,
                m.mce
            ));
        }
        out
    }
}

/// Serialize through a JSON value, whose maps keep keys sorted.
pub fn to_canonical_json<T: Serialize>(v: &T) -> String {
    let value = serde_json::to_value(v).expect("report serializes");
    let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
    s.push('\n');
    s
}
