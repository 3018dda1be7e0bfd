//! Single-file parameter container.
//!
//! Layout: magic `ECKP`, a little-endian `u64` header length, the JSON
//! header, then every tensor as raw little-endian `f32` in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::{Module, Real};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "echolab-ckpt/1";
const MAGIC: &[u8; 4] = b"ECKP";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode<T: Real, M: Module<T>>(model: &M, meta: serde_json::Value) -> Result<Vec<u8>> {
    let params = model.params();
    let mut offset = 0;
    let tensors = params
        .iter()
        .map(|(name, p)| {
            let e = TensorEntry {
                name: name.clone(),
                shape: p.shape.clone(),
                offset,
                len: p.len(),
            };
            offset += p.len();
            e
        })
        .collect();
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        meta,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(12 + json.len() + 4 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, p) in &params {
        for &v in &p.data {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a checkpoint into its header and flat `f32` payload.
pub fn decode(bytes: &[u8]) -> Result<(CheckpointHeader, Vec<f32>)> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::Format("not an echolab checkpoint".into()));
    }
    let hlen = u64::from_le_bytes(bytes[4..12].try_into().expect("8 bytes")) as usize;
    let body = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| Error::Format("truncated checkpoint header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(Error::Format(format!("unsupported checkpoint {}", header.format)));
    }
    let payload = &bytes[12 + hlen..];
    if !payload.len().is_multiple_of(4) {
        return Err(Error::Format("checkpoint payload is not f32-aligned".into()));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let needed = header.tensors.iter().map(|t| t.offset + t.len).max().unwrap_or(0);
    if data.len() < needed {
        return Err(Error::Format("checkpoint payload shorter than its header".into()));
    }
    Ok((header, data))
}

/// Copies stored tensors into `model`, matching by name and shape.
pub fn load_into<T: Real, M: Module<T>>(model: &mut M, bytes: &[u8]) -> Result<serde_json::Value> {
    let (header, data) = decode(bytes)?;
    for (name, p) in model.params_mut() {
        let entry = header
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Config(format!("checkpoint has no tensor `{name}`")))?;
        if entry.shape != p.shape {
            return Err(Error::Config(format!(
                "tensor `{name}`: checkpoint shape {:?}, model shape {:?}",
                entry.shape, p.shape
            )));
        }
        for (dst, &src) in p.data.iter_mut().zip(&data[entry.offset..entry.offset + entry.len]) {
            *dst = T::of(src as f64);
        }
    }
    Ok(header.meta)
}

pub fn save<T: Real, M: Module<T>>(path: &Path, model: &M, meta: serde_json::Value) -> Result<()> {
    let bytes = encode(model, meta)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load<T: Real, M: Module<T>>(path: &Path, model: &mut M) -> Result<serde_json::Value> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    load_into(model, &bytes)
}
