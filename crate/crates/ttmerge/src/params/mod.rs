//! Named-tensor parameter maps and weight-space merging.
//!
//! A [`ParameterMap`] holds one model's weights as an ordered dictionary from
//! tensor name to [`Tensor`]. Every tensor is `f32`, row-major. Maps are
//! immutable once built; every merge returns a fresh map.

mod checkpoint;
mod merge;

use std::collections::BTreeMap;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use merge::{
    lerp_params, mixup_merge, slerp_params, soup, task_arithmetic, ties_merge, ties_trim_mask,
    SLERP_PARALLEL_EPS,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    /// Build a tensor, checking `data.len() == product(shape)`, positive
    /// dimensions and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Validation(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Validation(format!(
                "shape {shape:?} needs {numel} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value {} at flat index {i}",
                data[i]
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n]).expect("zero tensor is valid")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn nbytes(&self) -> usize {
        self.data.len() * 4
    }

    /// Same shape, new values. Used by merges; re-validates finiteness.
    pub(crate) fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.shape.clone(), data)
    }
}

/// Ordered map from tensor name to tensor.
///
/// Iteration order is byte-lexicographic on names, which is also the order
/// tensors are laid out in a checkpoint file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterMap {
    entries: BTreeMap<String, Tensor>,
}

impl ParameterMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a tensor. Names must be unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Validation(format!("duplicate tensor name {name:?}")));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Shape(format!("missing tensor {name:?}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    /// All values concatenated in name order, widened to `f64`.
    pub fn flatten(&self) -> Vec<f64> {
        self.entries
            .values()
            .flat_map(|t| t.data.iter().map(|&v| v as f64))
            .collect()
    }

    /// Inverse of [`flatten`](Self::flatten) using `self` as the layout.
    /// Values are narrowed to `f32`.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.numel() {
            return Err(Error::Shape(format!(
                "flat vector has {} values, layout needs {}",
                flat.len(),
                self.numel()
            )));
        }
        let mut out = ParameterMap::new();
        let mut at = 0;
        for (name, t) in &self.entries {
            let data = flat[at..at + t.numel()].iter().map(|&v| v as f32).collect();
            at += t.numel();
            out.entries.insert(name.clone(), t.with_data(data)?);
        }
        Ok(out)
    }

    /// Check that `other` has exactly the same names and per-name shapes.
    pub fn check_aligned(&self, other: &ParameterMap) -> Result<()> {
        for name in self.entries.keys() {
            if !other.entries.contains_key(name) {
                return Err(Error::Alignment(format!("{name:?} missing from second map")));
            }
        }
        for (name, t) in &other.entries {
            match self.entries.get(name) {
                None => {
                    return Err(Error::Alignment(format!("{name:?} missing from first map")))
                }
                Some(mine) if mine.shape != t.shape => {
                    return Err(Error::Alignment(format!(
                        "{name:?}: shape {:?} vs {:?}",
                        mine.shape, t.shape
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn is_aligned(&self, other: &ParameterMap) -> bool {
        self.check_aligned(other).is_ok()
    }

    /// Elementwise combination of two aligned maps, computed in `f64`.
    pub(crate) fn zip_with(
        &self,
        other: &ParameterMap,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> Result<ParameterMap> {
        self.check_aligned(other)?;
        let mut out = ParameterMap::new();
        for ((name, a), b) in self.entries.iter().zip(other.entries.values()) {
            let data = a
                .data
                .iter()
                .zip(&b.data)
                .map(|(&x, &y)| f(x as f64, y as f64) as f32)
                .collect();
            out.entries.insert(name.clone(), a.with_data(data)?);
        }
        Ok(out)
    }

    /// Bitwise equality of every value (distinguishes `0.0` from `-0.0`).
    pub fn bit_eq(&self, other: &ParameterMap) -> bool {
        self.is_aligned(other)
            && self
                .entries
                .values()
                .zip(other.entries.values())
                .all(|(a, b)| a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()))
    }
}

impl FromIterator<(String, Tensor)> for ParameterMap {
    /// Later duplicates overwrite earlier ones.
    fn from_iter<I: IntoIterator<Item = (String, Tensor)>>(iter: I) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}
