//! Small classifiers whose weights live in a [`ParameterMap`].
//!
//! Two architectures share the checkpoint format:
//!
//! * linear softmax: `z = W x + b`, tensors `linear.W [C, D]`, `linear.b [C]`;
//! * one-hidden-layer MLP: `z = W2 relu(W1 x + b1) + b2`, tensors
//!   `mlp.W1 [H, D]`, `mlp.b1 [H]`, `mlp.W2 [C, H]`, `mlp.b2 [C]`.

mod dataset;
mod train;

pub use dataset::{Batch, Dataset, Split};
pub use train::{finetune, fit, train, Network, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParameterMap;
use crate::prob::LogitVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    Linear,
    Mlp { hidden: usize },
}

/// One affine layer borrowed from a parameter map.
#[derive(Debug, Clone, Copy)]
struct DenseView<'a> {
    out: usize,
    inp: usize,
    w: &'a [f32],
    b: &'a [f32],
}

impl DenseView<'_> {
    fn load<'a>(params: &'a ParameterMap, w: &str, b: &str) -> Result<DenseView<'a>> {
        let (wt, bt) = (params.require(w)?, params.require(b)?);
        match (wt.shape(), bt.shape()) {
            (&[out, inp], &[bout]) if out == bout => Ok(DenseView {
                out,
                inp,
                w: wt.data(),
                b: bt.data(),
            }),
            (ws, bs) => Err(Error::Shape(format!("{w} {ws:?} incompatible with {b} {bs:?}"))),
        }
    }

    fn apply(&self, x: &[f64], relu: bool) -> Vec<f64> {
        (0..self.out)
            .map(|o| {
                let row = &self.w[o * self.inp..(o + 1) * self.inp];
                let z = row
                    .iter()
                    .zip(x)
                    .fold(self.b[o] as f64, |acc, (&w, &xi)| acc + w as f64 * xi);
                if relu {
                    z.max(0.0)
                } else {
                    z
                }
            })
            .collect()
    }
}

/// Read-only inference view over a parameter map.
#[derive(Debug, Clone)]
pub struct Classifier<'a> {
    layers: Vec<DenseView<'a>>,
}

impl<'a> Classifier<'a> {
    /// Recognize the architecture from the tensor names and check shapes.
    pub fn new(params: &'a ParameterMap) -> Result<Self> {
        let layers = if params.get("linear.W").is_some() {
            expect_names(params, &["linear.W", "linear.b"])?;
            vec![DenseView::load(params, "linear.W", "linear.b")?]
        } else if params.get("mlp.W1").is_some() {
            expect_names(params, &["mlp.W1", "mlp.W2", "mlp.b1", "mlp.b2"])?;
            let l1 = DenseView::load(params, "mlp.W1", "mlp.b1")?;
            let l2 = DenseView::load(params, "mlp.W2", "mlp.b2")?;
            if l2.inp != l1.out {
                return Err(Error::Shape(format!(
                    "hidden width {} feeds a layer expecting {}",
                    l1.out, l2.inp
                )));
            }
            vec![l1, l2]
        } else {
            return Err(Error::Shape(
                "parameter map holds neither a linear nor an MLP classifier".into(),
            ));
        };
        if layers.last().unwrap().out < 2 {
            return Err(Error::Shape("classifier needs at least two classes".into()));
        }
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inp
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().out
    }

    pub fn architecture(&self) -> Architecture {
        match self.layers.len() {
            1 => Architecture::Linear,
            _ => Architecture::Mlp {
                hidden: self.layers[0].out,
            },
        }
    }

    pub fn logits(&self, x: &[f32]) -> Result<LogitVector> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input of dimension {} for a model expecting {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut h: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(&h, i < last);
        }
        LogitVector::new(h)
    }
}

fn expect_names(params: &ParameterMap, names: &[&str]) -> Result<()> {
    let have: Vec<&str> = params.names().collect();
    if have != names {
        return Err(Error::Shape(format!(
            "expected tensors {names:?}, found {have:?}"
        )));
    }
    Ok(())
}

/// Logits of the classifier stored in `params` at input `x`.
pub fn forward(params: &ParameterMap, x: &[f32]) -> Result<LogitVector> {
    Classifier::new(params)?.logits(x)
}
