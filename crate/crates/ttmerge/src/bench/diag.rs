//! Agreement/correctness quadrants and the divergence–entropy-ratio
//! correlation.

use serde::{Deserialize, Serialize};

use super::metrics::pearson;
use crate::error::{Error, Result};
use crate::models::{Classifier, Dataset};
use crate::params::ParameterMap;
use crate::prob::{softmax, Stabilized};

/// Which of the two models got a sample right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrant {
    TrueTrue,
    TrueFalse,
    FalseTrue,
    FalseFalse,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::TrueTrue,
        Quadrant::TrueFalse,
        Quadrant::FalseTrue,
        Quadrant::FalseFalse,
    ];

    /// First word: pretrained correct; second: expert correct.
    pub fn of(pt_correct: bool, ft_correct: bool) -> Self {
        match (pt_correct, ft_correct) {
            (true, true) => Quadrant::TrueTrue,
            (true, false) => Quadrant::TrueFalse,
            (false, true) => Quadrant::FalseTrue,
            (false, false) => Quadrant::FalseFalse,
        }
    }
}

/// Statistics of one group; `None` when the group is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub quadrant: Quadrant,
    pub count: usize,
    pub mean_mi: Option<f64>,
    pub mean_ratio: Option<f64>,
    pub rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantReport {
    pub groups: Vec<GroupStats>,
    pub count: usize,
    /// Pearson correlation of divergence and entropy ratio over all samples.
    pub rho: f64,
}

impl QuadrantReport {
    pub fn group(&self, q: Quadrant) -> &GroupStats {
        self.groups.iter().find(|g| g.quadrant == q).expect("all quadrants present")
    }
}

/// Per-sample divergence, entropy ratio and quadrant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDiag {
    pub mi: f64,
    pub ratio: f64,
    pub quadrant: Quadrant,
}

pub fn sample_diagnostics(
    pt: &ParameterMap,
    ft: &ParameterMap,
    data: &Dataset,
) -> Result<Vec<SampleDiag>> {
    pt.check_aligned(ft)?;
    let (cpt, cft) = (Classifier::new(pt)?, Classifier::new(ft)?);
    let st = Stabilized::default();
    (0..data.len())
        .map(|i| {
            let x = data.row(i);
            let (zp, zf) = (cpt.logits(x)?, cft.logits(x)?);
            let (pp, pf) = (softmax(&zp), softmax(&zf));
            let y = data.label(i);
            Ok(SampleDiag {
                mi: st.js_divergence(&pp, &pf)?,
                ratio: st.entropy_ratio(&pp, &pf)?,
                quadrant: Quadrant::of(zp.argmax() == y, zf.argmax() == y),
            })
        })
        .collect()
}

/// Group samples by quadrant and summarize each group.
pub fn summarize(samples: &[SampleDiag]) -> Result<QuadrantReport> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to analyse".into()));
    }
    let mut groups = Vec::with_capacity(4);
    for q in Quadrant::ALL {
        let (mi, r): (Vec<f64>, Vec<f64>) = samples
            .iter()
            .filter(|s| s.quadrant == q)
            .map(|s| (s.mi, s.ratio))
            .unzip();
        let n = mi.len();
        let stats = if n == 0 {
            GroupStats {
                quadrant: q,
                count: 0,
                mean_mi: None,
                mean_ratio: None,
                rho: None,
            }
        } else {
            GroupStats {
                quadrant: q,
                count: n,
                mean_mi: Some(mi.iter().sum::<f64>() / n as f64),
                mean_ratio: Some(r.iter().sum::<f64>() / n as f64),
                rho: Some(pearson(&mi, &r)?),
            }
        };
        groups.push(stats);
    }
    let (mi, r): (Vec<f64>, Vec<f64>) = samples.iter().map(|s| (s.mi, s.ratio)).unzip();
    Ok(QuadrantReport {
        groups,
        count: samples.len(),
        rho: pearson(&mi, &r)?,
    })
}

pub fn quadrant_analysis(
    pt: &ParameterMap,
    ft: &ParameterMap,
    data: &Dataset,
) -> Result<QuadrantReport> {
    summarize(&sample_diagnostics(pt, ft, data)?)
}

/// Quadrant analysis over the union of several datasets.
pub fn quadrant_analysis_pooled(
    pt: &ParameterMap,
    ft: &ParameterMap,
    sets: &[&Dataset],
) -> Result<QuadrantReport> {
    let mut all = Vec::new();
    for d in sets {
        all.extend(sample_diagnostics(pt, ft, d)?);
    }
    summarize(&all)
}
