//! Labeled feature matrices and the `TTDS` dataset file format.
//!
//! ```text
//! "TTDS" | version u32 LE (=1) | header_len u64 LE | {"n":..,"d":..,"c":..}
//!        | X: n·d f32 LE, row-major | y: n u32 LE
//! ```

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TTDS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f32>,
    labels: Vec<u32>,
    dim: usize,
    classes: usize,
    split: Split,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    n: usize,
    d: usize,
    c: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f32>,
        labels: Vec<u32>,
        dim: usize,
        classes: usize,
        split: Split,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Empty("dataset has no samples".into()));
        }
        if dim == 0 {
            return Err(Error::Validation("feature dimension must be positive".into()));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Validation(format!(
                "{} feature values for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(y) = labels.iter().find(|&&y| y as usize >= classes) {
            return Err(Error::Validation(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite feature value".into()));
        }
        Ok(Self {
            features,
            labels,
            dim,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    /// Same labels, new features (e.g. a corrupted copy).
    pub fn with_features(&self, features: Vec<f32>) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.dim, self.classes, self.split)
    }

    /// Rows `rows` as a new dataset.
    pub fn subset(&self, rows: Range<usize>) -> Result<Self> {
        Self::new(
            self.features[rows.start * self.dim..rows.end * self.dim].to_vec(),
            self.labels[rows].to_vec(),
            self.dim,
            self.classes,
            self.split,
        )
    }

    pub fn batch(&self, rows: Range<usize>) -> Batch<'_> {
        assert!(rows.start < rows.end && rows.end <= self.len());
        Batch { data: self, rows }
    }

    /// Contiguous batches in dataset order; the last one may be short.
    pub fn batches(&self, batch_size: usize) -> impl Iterator<Item = Batch<'_>> + '_ {
        assert!(batch_size > 0);
        (0..self.len())
            .step_by(batch_size)
            .map(move |s| self.batch(s..(s + batch_size).min(self.len())))
    }

    pub fn num_batches(&self, batch_size: usize) -> usize {
        self.len().div_ceil(batch_size)
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            n: self.len(),
            d: self.dim,
            c: self.classes,
        })
        .expect("header serializes");
        let mut payload = Vec::with_capacity(self.features.len() * 4 + self.labels.len() * 4);
        container::f32s_le(&self.features, &mut payload);
        for y in &self.labels {
            payload.extend_from_slice(&y.to_le_bytes());
        }
        container::encode(MAGIC, &header, &payload)
    }

    /// Decode a `TTDS` buffer. The split tag is not stored and comes back as
    /// [`Split::Test`].
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (header, payload) = container::decode(MAGIC, bytes)?;
        let h: Header = serde_json::from_slice(header)
            .map_err(|e| Error::Format(format!("dataset header: {e}")))?;
        let need = h
            .n
            .checked_mul(h.d)
            .and_then(|v| v.checked_add(h.n))
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| Error::Corruption("dataset header sizes overflow".into()))?;
        if payload.len() != need {
            return Err(Error::Corruption(format!(
                "dataset payload is {} bytes, header implies {need}",
                payload.len()
            )));
        }
        let (x, y) = payload.split_at(h.n * h.d * 4);
        let labels = y
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(container::read_f32s(x), labels, h.d, h.c, Split::Test)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&container::read(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        container::write_atomic(path.as_ref(), &self.encode())
    }
}

/// A contiguous run of rows of a dataset.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    data: &'a Dataset,
    rows: Range<usize>,
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Index of the first row within the parent dataset.
    pub fn start(&self) -> usize {
        self.rows.start
    }

    pub fn rows(&self) -> Range<usize> {
        self.rows.clone()
    }

    pub fn row(&self, i: usize) -> &'a [f32] {
        self.data.row(self.rows.start + i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f32]> + '_ {
        self.rows.clone().map(|i| self.data.row(i))
    }
}
