//! Mini-batch gradient descent on mean cross-entropy.
//!
//! Training runs on an `f64` copy of the weights ([`Network`]) and narrows to
//! `f32` only when the result is written back into a [`ParameterMap`].
//! Each epoch shuffles the full index set once (Fisher–Yates on the supplied
//! generator) and then walks it in contiguous mini-batches. Gradients are
//! accumulated sample by sample in index order, so a run is a pure function
//! of `(init, data, config, seed)`.

use serde::{Deserialize, Serialize};

use super::{Architecture, Classifier, Dataset};
use crate::error::{Error, Result};
use crate::params::{ParameterMap, Tensor};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight decay on weight matrices (biases are not decayed).
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            epochs: 50,
            batch_size: 32,
            l2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    out: usize,
    inp: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            out,
            inp,
            w: vec![0.0; out * inp],
            b: vec![0.0; out],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.out)
            .map(|o| {
                self.w[o * self.inp..(o + 1) * self.inp]
                    .iter()
                    .zip(x)
                    .fold(self.b[o], |acc, (w, xi)| acc + w * xi)
            })
            .collect()
    }
}

/// Trainable `f64` copy of a classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    arch: Architecture,
    layers: Vec<Dense>,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn init(arch: Architecture, dim: usize, classes: usize, rng: &mut SplitMix64) -> Self {
        let widths = match arch {
            Architecture::Linear => vec![dim, classes],
            Architecture::Mlp { hidden } => vec![dim, hidden, classes],
        };
        let layers = widths
            .windows(2)
            .map(|w| {
                let (inp, out) = (w[0], w[1]);
                let a = (6.0 / (inp + out) as f64).sqrt();
                let mut layer = Dense::zeros(out, inp);
                for v in &mut layer.w {
                    *v = rng.uniform(-a, a);
                }
                layer
            })
            .collect();
        Self { arch, layers }
    }

    pub fn from_params(params: &ParameterMap) -> Result<Self> {
        let arch = Classifier::new(params)?.architecture();
        let names: &[(&str, &str)] = match arch {
            Architecture::Linear => &[("linear.W", "linear.b")],
            Architecture::Mlp { .. } => &[("mlp.W1", "mlp.b1"), ("mlp.W2", "mlp.b2")],
        };
        let layers = names
            .iter()
            .map(|(w, b)| {
                let (wt, bt) = (params.require(w)?, params.require(b)?);
                Ok(Dense {
                    out: wt.shape()[0],
                    inp: wt.shape()[1],
                    w: wt.data().iter().map(|&v| v as f64).collect(),
                    b: bt.data().iter().map(|&v| v as f64).collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { arch, layers })
    }

    pub fn to_params(&self) -> Result<ParameterMap> {
        let names: &[(&str, &str)] = match self.arch {
            Architecture::Linear => &[("linear.W", "linear.b")],
            Architecture::Mlp { .. } => &[("mlp.W1", "mlp.b1"), ("mlp.W2", "mlp.b2")],
        };
        let mut m = ParameterMap::new();
        for ((wn, bn), l) in names.iter().zip(&self.layers) {
            let narrow = |v: &[f64]| v.iter().map(|&x| x as f32).collect::<Vec<_>>();
            m.insert(*wn, Tensor::new(vec![l.out, l.inp], narrow(&l.w))?)?;
            m.insert(*bn, Tensor::new(vec![l.out], narrow(&l.b))?)?;
        }
        Ok(m)
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inp
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().out
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = *it.next().unwrap();
            }
        }
    }

    /// Hidden activations (MLP only) and logits.
    fn forward_cache(&self, x: &[f64]) -> (Option<Vec<f64>>, Vec<f64>) {
        match self.layers.as_slice() {
            [l] => (None, l.forward(x)),
            [l1, l2] => {
                let h: Vec<f64> = l1.forward(x).into_iter().map(|a| a.max(0.0)).collect();
                let z = l2.forward(&h);
                (Some(h), z)
            }
            _ => unreachable!("one or two layers"),
        }
    }

    pub fn logits(&self, x: &[f32]) -> Vec<f64> {
        let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        self.forward_cache(&x).1
    }

    fn l2_penalty(&self, l2: f64) -> f64 {
        if l2 == 0.0 {
            return 0.0;
        }
        0.5 * l2 * self.layers.iter().flat_map(|l| &l.w).map(|w| w * w).sum::<f64>()
    }

    /// Mean cross-entropy over `rows` of `data`, plus `½·l2·Σ‖W‖²`.
    pub fn loss(&self, data: &Dataset, rows: &[usize], l2: f64) -> f64 {
        let total: f64 = rows
            .iter()
            .map(|&i| {
                let z = self.logits(data.row(i));
                nll(&z, data.label(i))
            })
            .sum();
        total / rows.len() as f64 + self.l2_penalty(l2)
    }

    /// Gradient of [`loss`](Self::loss), laid out like [`flat`](Self::flat).
    pub fn gradient(&self, data: &Dataset, rows: &[usize], l2: f64) -> Vec<f64> {
        let mut g: Vec<Dense> = self.layers.iter().map(|l| Dense::zeros(l.out, l.inp)).collect();
        for &i in rows {
            let x: Vec<f64> = data.row(i).iter().map(|&v| v as f64).collect();
            let (hidden, z) = self.forward_cache(&x);
            let mut dz = softmax(&z);
            dz[data.label(i)] -= 1.0;
            match hidden {
                None => outer_acc(&mut g[0], &dz, &x),
                Some(h) => {
                    outer_acc(&mut g[1], &dz, &h);
                    let l2w = &self.layers[1];
                    let dh: Vec<f64> = (0..l2w.inp)
                        .map(|j| {
                            if h[j] > 0.0 {
                                (0..l2w.out).map(|o| l2w.w[o * l2w.inp + j] * dz[o]).sum()
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    outer_acc(&mut g[0], &dh, &x);
                }
            }
        }
        let scale = 1.0 / rows.len() as f64;
        for (gl, l) in g.iter_mut().zip(&self.layers) {
            for (gw, w) in gl.w.iter_mut().zip(&l.w) {
                *gw = *gw * scale + l2 * w;
            }
            for gb in &mut gl.b {
                *gb *= scale;
            }
        }
        g.iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let correct = (0..data.len())
            .filter(|&i| crate::prob::argmax(&self.logits(data.row(i))) == data.label(i))
            .count();
        correct as f64 / data.len() as f64
    }
}

fn outer_acc(g: &mut Dense, d: &[f64], x: &[f64]) {
    for (o, &dv) in d.iter().enumerate() {
        g.b[o] += dv;
        if dv != 0.0 {
            for (gw, xi) in g.w[o * g.inp..(o + 1) * g.inp].iter_mut().zip(x) {
                *gw += dv * xi;
            }
        }
    }
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `−ln softmax(z)_y` via log-sum-exp.
fn nll(z: &[f64], y: usize) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[y]
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub params: ParameterMap,
    /// Full-data loss after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Run the descent loop from `init`.
pub fn fit(
    init: Network,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut SplitMix64,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite() && cfg.l2 >= 0.0 && cfg.l2.is_finite()) {
        return Err(Error::Config(format!(
            "learning rate {} / l2 {} must be finite and non-negative",
            cfg.lr, cfg.l2
        )));
    }
    if data.dim() != init.input_dim() || data.classes() != init.classes() {
        return Err(Error::Shape(format!(
            "data is {}-d with {} classes, model is {}-d with {}",
            data.dim(),
            data.classes(),
            init.input_dim(),
            init.classes()
        )));
    }
    let mut net = init;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let all: Vec<usize> = order.clone();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.lr == 0.0 {
                continue;
            }
            let g = net.gradient(data, chunk, cfg.l2);
            let mut flat = net.flat();
            for (p, gi) in flat.iter_mut().zip(&g) {
                *p -= cfg.lr * gi;
            }
            net.set_flat(&flat);
        }
        let loss = net.loss(data, &all, cfg.l2);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("loss {loss} after epoch {epoch}")));
        }
        epoch_losses.push(loss);
    }
    let params = net
        .to_params()
        .map_err(|e| Error::Divergence(format!("weights do not fit in f32: {e}")))?;
    Ok(TrainReport {
        params,
        epoch_losses,
    })
}

/// Train a fresh model of architecture `arch` on `data`.
///
/// Initialization draws from `rng` before any shuffling does.
pub fn train(
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut SplitMix64,
    arch: Architecture,
) -> Result<ParameterMap> {
    let init = Network::init(arch, data.dim(), data.classes(), rng);
    Ok(fit(init, data, cfg, rng)?.params)
}

/// Continue training from an existing checkpoint.
pub fn finetune(
    init: &ParameterMap,
    data: &Dataset,
    cfg: &TrainConfig,
    rng: &mut SplitMix64,
) -> Result<ParameterMap> {
    Ok(fit(Network::from_params(init)?, data, cfg, rng)?.params)
}
