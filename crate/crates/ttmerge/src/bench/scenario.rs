//! Synthetic generalist/expert scenario with base-to-novel and corruption
//! shifts.
//!
//! Features split into `semantic_dim` coordinates carrying the class and
//! `domain_dim` coordinates carrying an acquisition signature.
//!
//! * Pretraining domain: every class, several sub-clusters per class, wide
//!   within-class spread, signature coordinates near zero.
//! * Expert domain: base classes only. Semantic coordinates are noisier, and
//!   each class adds its own signature on the domain coordinates.
//!
//! The pretrained model learns from the pretraining domain; the expert is
//! fine-tuned from it on expert-domain data. Test sets are the expert domain
//! (in-domain), novel classes drawn from the pretraining domain, and
//! corrupted copies of the in-domain set at every severity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::corrupt::{corrupt, CorruptionKind, CorruptionSpec, SEVERITIES};
use crate::container;
use crate::error::{Error, Result};
use crate::models::{finetune, train, Architecture, Dataset, Split, TrainConfig};
use crate::params::{load_checkpoint, save_checkpoint, ParameterMap};
use crate::rng::SplitMix64;

/// Everything that shapes a scenario besides the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioParams {
    pub semantic_dim: usize,
    pub domain_dim: usize,
    pub base_classes: usize,
    pub novel_classes: usize,
    /// Typical norm of a class prototype.
    pub prototype_scale: f64,
    pub pretrain_clusters: usize,
    /// Spread of sub-cluster centres around their class prototype.
    pub cluster_spread: f64,
    pub pretrain_noise: f64,
    pub pretrain_domain_noise: f64,
    pub expert_semantic_noise: f64,
    /// Typical norm of a class signature on the domain coordinates.
    pub signature_scale: f64,
    pub expert_domain_noise: f64,
    pub n_pretrain: usize,
    pub n_expert: usize,
    pub n_test: usize,
    pub n_novel: usize,
    pub architecture: Architecture,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
}

/// The shipped scenario.
impl Default for ScenarioParams {
    fn default() -> Self {
        serde_json::from_str(PINNED_PARAMS_JSON).expect("shipped scenario parameters parse")
    }
}

/// Parameters of the shipped scenario as JSON.
pub const PINNED_PARAMS_JSON: &str = include_str!("../../fixtures/scenario_params.json");

/// Seed of the shipped scenario.
pub const PINNED_SEED: u64 = 42;

impl ScenarioParams {
    pub fn dim(&self) -> usize {
        self.semantic_dim + self.domain_dim
    }

    pub fn classes(&self) -> usize {
        self.base_classes + self.novel_classes
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.base_classes < 2 {
            return bad(format!("need at least 2 base classes, got {}", self.base_classes));
        }
        if self.novel_classes < 1 {
            return bad("need at least 1 novel class".into());
        }
        if self.semantic_dim < 1 {
            return bad("semantic dimension must be >= 1".into());
        }
        if self.pretrain_clusters < 1 {
            return bad("need at least one cluster per class".into());
        }
        for (name, n) in [
            ("n_pretrain", self.n_pretrain),
            ("n_expert", self.n_expert),
            ("n_test", self.n_test),
            ("n_novel", self.n_novel),
        ] {
            if n == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        for (name, v) in [
            ("prototype_scale", self.prototype_scale),
            ("cluster_spread", self.cluster_spread),
            ("pretrain_noise", self.pretrain_noise),
            ("pretrain_domain_noise", self.pretrain_domain_noise),
            ("expert_semantic_noise", self.expert_semantic_noise),
            ("signature_scale", self.signature_scale),
            ("expert_domain_noise", self.expert_domain_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if let Architecture::Mlp { hidden: 0 } = self.architecture {
            return bad("MLP hidden width must be >= 1".into());
        }
        Ok(())
    }
}

/// A corrupted copy of the in-domain test set.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedSet {
    pub spec: CorruptionSpec,
    pub data: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftScenario {
    pub seed: u64,
    pub params: ScenarioParams,
    pub pretrain_data: Dataset,
    pub expert_data: Dataset,
    pub test_in_domain: Dataset,
    pub test_novel: Dataset,
    /// Noise severities 1..=5, then quantization severities 1..=5.
    pub test_corrupted: Vec<CorruptedSet>,
}

// Stream tags.
const TAG_GEOMETRY: u64 = 1;
const TAG_PRETRAIN: u64 = 2;
const TAG_EXPERT: u64 = 3;
const TAG_TEST: u64 = 4;
const TAG_NOVEL: u64 = 5;
const TAG_TRAIN_PT: u64 = 6;
const TAG_TRAIN_FT: u64 = 7;

fn gaussian_vec(rng: &mut SplitMix64, n: usize, norm: f64) -> Vec<f64> {
    let s = norm / (n.max(1) as f64).sqrt();
    (0..n).map(|_| s * rng.next_gaussian()).collect()
}

struct Geometry {
    /// `[class][cluster]` centres on the semantic coordinates.
    centres: Vec<Vec<Vec<f64>>>,
    prototypes: Vec<Vec<f64>>,
    /// Per base class, on the domain coordinates.
    signatures: Vec<Vec<f64>>,
}

impl Geometry {
    fn draw(p: &ScenarioParams, rng: &mut SplitMix64) -> Self {
        let prototypes: Vec<Vec<f64>> = (0..p.classes())
            .map(|_| gaussian_vec(rng, p.semantic_dim, p.prototype_scale))
            .collect();
        let centres = prototypes
            .iter()
            .map(|mu| {
                (0..p.pretrain_clusters)
                    .map(|_| {
                        let off = gaussian_vec(rng, p.semantic_dim, p.cluster_spread);
                        mu.iter().zip(off).map(|(a, b)| a + b).collect()
                    })
                    .collect()
            })
            .collect();
        let signatures = (0..p.base_classes)
            .map(|_| gaussian_vec(rng, p.domain_dim, p.signature_scale))
            .collect();
        Self {
            centres,
            prototypes,
            signatures,
        }
    }
}

fn push_noisy(out: &mut Vec<f32>, centre: &[f64], sigma: f64, rng: &mut SplitMix64) {
    out.extend(centre.iter().map(|c| (c + sigma * rng.next_gaussian()) as f32));
}

fn push_zero_noisy(out: &mut Vec<f32>, n: usize, sigma: f64, rng: &mut SplitMix64) {
    out.extend((0..n).map(|_| (sigma * rng.next_gaussian()) as f32));
}

/// `n` pretraining-domain samples with labels drawn from `classes`.
fn pretrain_domain(
    p: &ScenarioParams,
    g: &Geometry,
    classes: std::ops::Range<usize>,
    n: usize,
    split: Split,
    rng: &mut SplitMix64,
) -> Result<Dataset> {
    let mut x = Vec::with_capacity(n * p.dim());
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let k = classes.start + rng.below(classes.len());
        let c = rng.below(p.pretrain_clusters);
        push_noisy(&mut x, &g.centres[k][c], p.pretrain_noise, rng);
        push_zero_noisy(&mut x, p.domain_dim, p.pretrain_domain_noise, rng);
        y.push(k as u32);
    }
    Dataset::new(x, y, p.dim(), p.classes(), split)
}

fn expert_domain(
    p: &ScenarioParams,
    g: &Geometry,
    n: usize,
    split: Split,
    rng: &mut SplitMix64,
) -> Result<Dataset> {
    let mut x = Vec::with_capacity(n * p.dim());
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.below(p.base_classes);
        push_noisy(&mut x, &g.prototypes[k], p.expert_semantic_noise, rng);
        push_noisy(&mut x, &g.signatures[k], p.expert_domain_noise, rng);
        y.push(k as u32);
    }
    Dataset::new(x, y, p.dim(), p.classes(), split)
}

/// Every corruption at every severity, noise first.
pub fn corruption_specs() -> Vec<CorruptionSpec> {
    CorruptionKind::ALL
        .iter()
        .flat_map(|&k| SEVERITIES.map(move |s| CorruptionSpec { kind: k, severity: s }))
        .collect()
}

/// Generate all datasets of a scenario. Deterministic in `(seed, params)`.
pub fn gen_scenario(seed: u64, params: &ScenarioParams) -> Result<ShiftScenario> {
    params.validate()?;
    let p = params;
    let g = Geometry::draw(p, &mut SplitMix64::derive(seed, TAG_GEOMETRY));
    let pretrain_data = pretrain_domain(
        p,
        &g,
        0..p.classes(),
        p.n_pretrain,
        Split::Train,
        &mut SplitMix64::derive(seed, TAG_PRETRAIN),
    )?;
    let expert_data = expert_domain(p, &g, p.n_expert, Split::Train, &mut SplitMix64::derive(seed, TAG_EXPERT))?;
    let test_in_domain = expert_domain(p, &g, p.n_test, Split::Test, &mut SplitMix64::derive(seed, TAG_TEST))?;
    let test_novel = pretrain_domain(
        p,
        &g,
        p.base_classes..p.classes(),
        p.n_novel,
        Split::Test,
        &mut SplitMix64::derive(seed, TAG_NOVEL),
    )?;
    let test_corrupted = corruption_specs()
        .into_iter()
        .map(|spec| {
            let mut rng = SplitMix64::derive(seed, spec.tag());
            let x = corrupt(test_in_domain.features(), spec, &mut rng)?;
            Ok(CorruptedSet {
                spec,
                data: test_in_domain.with_features(x)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ShiftScenario {
        seed,
        params: params.clone(),
        pretrain_data,
        expert_data,
        test_in_domain,
        test_novel,
        test_corrupted,
    })
}

/// Train the pretrained model on the pretraining domain, then fine-tune a
/// copy on the expert domain.
pub fn train_pair(s: &ShiftScenario) -> Result<(ParameterMap, ParameterMap)> {
    let p = &s.params;
    let pt = train(
        &s.pretrain_data,
        &p.pretrain,
        &mut SplitMix64::derive(s.seed, TAG_TRAIN_PT),
        p.architecture,
    )?;
    let ft = finetune(
        &pt,
        &s.expert_data,
        &p.finetune,
        &mut SplitMix64::derive(s.seed, TAG_TRAIN_FT),
    )?;
    Ok((pt, ft))
}

/// File names inside a scenario directory.
pub mod files {
    pub const MANIFEST: &str = "scenario.json";
    pub const PRETRAIN: &str = "pretrain.ttds";
    pub const EXPERT: &str = "expert.ttds";
    pub const TEST_IN_DOMAIN: &str = "test_in_domain.ttds";
    pub const TEST_NOVEL: &str = "test_novel.ttds";
    pub const PT: &str = "pt.ttmc";
    pub const FT: &str = "ft.ttmc";

    pub fn corrupted(spec: &super::CorruptionSpec) -> String {
        format!("test_{}_s{}.ttds", spec.kind, spec.severity)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    seed: u64,
    params: ScenarioParams,
}

impl ShiftScenario {
    /// Write every dataset and a manifest into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            seed: self.seed,
            params: self.params.clone(),
        };
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        container::write_atomic(&dir.join(files::MANIFEST), &json)?;
        self.pretrain_data.save(dir.join(files::PRETRAIN))?;
        self.expert_data.save(dir.join(files::EXPERT))?;
        self.test_in_domain.save(dir.join(files::TEST_IN_DOMAIN))?;
        self.test_novel.save(dir.join(files::TEST_NOVEL))?;
        for c in &self.test_corrupted {
            c.data.save(dir.join(files::corrupted(&c.spec)))?;
        }
        Ok(())
    }

    /// Read a directory written by [`ShiftScenario::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(files::MANIFEST);
        let m: Manifest = serde_json::from_slice(&container::read(&path)?)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.params.validate()?;
        let load = |name: &str, split: Split| -> Result<Dataset> {
            Ok(Dataset::load(dir.join(name))?.with_split(split))
        };
        let test_corrupted = corruption_specs()
            .into_iter()
            .map(|spec| {
                Ok(CorruptedSet {
                    spec,
                    data: load(&files::corrupted(&spec), Split::Test)?,
                })
            })
            .collect::<Result<_>>()?;
        let s = ShiftScenario {
            seed: m.seed,
            params: m.params,
            pretrain_data: load(files::PRETRAIN, Split::Train)?,
            expert_data: load(files::EXPERT, Split::Train)?,
            test_in_domain: load(files::TEST_IN_DOMAIN, Split::Test)?,
            test_novel: load(files::TEST_NOVEL, Split::Test)?,
            test_corrupted,
        };
        s.check()?;
        Ok(s)
    }

    /// Cross-file consistency of a loaded scenario.
    pub fn check(&self) -> Result<()> {
        let (d, c) = (self.params.dim(), self.params.classes());
        let all = [
            &self.pretrain_data,
            &self.expert_data,
            &self.test_in_domain,
            &self.test_novel,
        ]
        .into_iter()
        .chain(self.test_corrupted.iter().map(|s| &s.data));
        for ds in all {
            if ds.dim() != d || ds.classes() != c {
                return Err(Error::Corruption(format!(
                    "dataset is {}-d with {} classes, manifest says {d}-d with {c}",
                    ds.dim(),
                    ds.classes()
                )));
            }
        }
        for s in &self.test_corrupted {
            if s.data.labels() != self.test_in_domain.labels() {
                return Err(Error::Corruption(format!(
                    "{} labels differ from the in-domain set",
                    files::corrupted(&s.spec)
                )));
            }
        }
        Ok(())
    }

    pub fn corrupted(&self, kind: CorruptionKind) -> impl Iterator<Item = &CorruptedSet> {
        self.test_corrupted.iter().filter(move |s| s.spec.kind == kind)
    }
}

/// Save the model pair next to a scenario.
pub fn save_pair(dir: &Path, pt: &ParameterMap, ft: &ParameterMap) -> Result<()> {
    save_checkpoint(pt, dir.join(files::PT))?;
    save_checkpoint(ft, dir.join(files::FT))
}

pub fn load_pair(dir: &Path) -> Result<(ParameterMap, ParameterMap)> {
    Ok((
        load_checkpoint(dir.join(files::PT))?,
        load_checkpoint(dir.join(files::FT))?,
    ))
}
