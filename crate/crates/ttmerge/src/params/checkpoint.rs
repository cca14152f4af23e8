//! The `TTMC` checkpoint format.
//!
//! ```text
//! "TTMC" | version u32 LE (=1) | header_len u64 LE | JSON header | data
//! ```
//!
//! The header maps each tensor name to
//! `{"dtype":"f32","shape":[..],"offset":<bytes into data>,"nbytes":<int>}`,
//! names in lexicographic order, serialized without whitespace. The data
//! region is the tensors' little-endian `f32` values packed in header order
//! with no padding.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParameterMap, Tensor};
use crate::container;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TTMC";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    dtype: String,
    shape: Vec<usize>,
    offset: u64,
    nbytes: u64,
}

pub fn encode_checkpoint(map: &ParameterMap) -> Vec<u8> {
    let mut header = BTreeMap::new();
    let mut data = Vec::with_capacity(map.numel() * 4);
    for (name, t) in map.iter() {
        header.insert(
            name,
            TensorEntry {
                dtype: "f32".into(),
                shape: t.shape().to_vec(),
                offset: data.len() as u64,
                nbytes: t.nbytes() as u64,
            },
        );
        container::f32s_le(t.data(), &mut data);
    }
    let header = serde_json::to_vec(&header).expect("header serializes");
    container::encode(MAGIC, &header, &data)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParameterMap> {
    let (header, data) = container::decode(MAGIC, bytes)?;
    let header: BTreeMap<String, TensorEntry> = serde_json::from_slice(header)
        .map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;

    let mut map = ParameterMap::new();
    let mut expected_offset = 0u64;
    for (name, entry) in header {
        if entry.dtype != "f32" {
            return Err(Error::Format(format!(
                "{name:?}: unsupported dtype {:?}",
                entry.dtype
            )));
        }
        let numel = entry
            .shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
            .ok_or_else(|| Error::Corruption(format!("{name:?}: shape overflows")))?;
        if numel.checked_mul(4) != Some(entry.nbytes) {
            return Err(Error::Corruption(format!(
                "{name:?}: shape {:?} implies {} bytes, header says {}",
                entry.shape,
                numel.saturating_mul(4),
                entry.nbytes
            )));
        }
        if entry.offset != expected_offset {
            return Err(Error::Corruption(format!(
                "{name:?}: offset {} but tensors must be packed (expected {expected_offset})",
                entry.offset
            )));
        }
        let end = entry.offset + entry.nbytes;
        if end > data.len() as u64 {
            return Err(Error::Corruption(format!(
                "{name:?}: data region truncated ({} bytes, need {end})",
                data.len()
            )));
        }
        let values = container::read_f32s(&data[entry.offset as usize..end as usize]);
        let tensor = Tensor::new(entry.shape, values)
            .map_err(|e| Error::Validation(format!("{name:?}: {e}")))?;
        map.insert(name, tensor)?;
        expected_offset = end;
    }
    if expected_offset != data.len() as u64 {
        return Err(Error::Corruption(format!(
            "{} trailing bytes after last tensor",
            data.len() as u64 - expected_offset
        )));
    }
    Ok(map)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParameterMap> {
    decode_checkpoint(&container::read(path.as_ref())?)
}

/// Write atomically. The byte stream depends only on the map's contents.
pub fn save_checkpoint(map: &ParameterMap, path: impl AsRef<Path>) -> Result<()> {
    container::write_atomic(path.as_ref(), &encode_checkpoint(map))
}
