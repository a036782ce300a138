//! Binary parameter checkpoints.
//!
//! Layout: the magic `TSAMCKPT`, a little-endian `u32` format version, a
//! little-endian `u64` header length, a JSON header (precision, config, tensor
//! names and shapes), then every tensor's values as little-endian floats of
//! the recorded precision, in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{param_shapes, ModelConfig, ModelParams, NodeFeatures, TsamModel};
use crate::error::{Result, TsamError};
use crate::numerics::{Scalar, Tensor};

const MAGIC: &[u8; 8] = b"TSAMCKPT";
const VERSION: u32 = 1;
const FEATURES: &str = "features.x";

#[derive(Serialize, Deserialize)]
struct Header {
    precision: u32,
    config: ModelConfig,
    tensors: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
}

pub fn write_checkpoint<S: Scalar>(model: &TsamModel<S>, mut out: impl Write) -> Result<()> {
    let mut tensors: Vec<(String, &Tensor<S>)> = model.params.named();
    tensors.push((FEATURES.to_string(), &model.features.x));
    let header = Header {
        precision: S::BITS,
        config: model.cfg.clone(),
        tensors: tensors
            .iter()
            .map(|(name, t)| Entry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| TsamError::Format(e.to_string()))?;
    let io = |e| TsamError::io("checkpoint", e);
    out.write_all(MAGIC).map_err(io)?;
    out.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
    out.write_all(&json).map_err(io)?;
    for (_, t) in &tensors {
        let mut buf = Vec::with_capacity(t.len() * (S::BITS as usize / 8));
        for &v in t.data() {
            if S::BITS == 64 {
                buf.extend_from_slice(&v.as_f64().to_le_bytes());
            } else {
                buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads a checkpoint, converting values to `S` when the stored precision
/// differs.
pub fn read_checkpoint<S: Scalar>(mut input: impl Read) -> Result<TsamModel<S>> {
    let io = |e| TsamError::io("checkpoint", e);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(TsamError::Format("not a checkpoint file".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(io)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(TsamError::Format(format!("unsupported checkpoint version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(io)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| TsamError::Format(e.to_string()))?;
    let width = match header.precision {
        32 => 4,
        64 => 8,
        p => return Err(TsamError::Format(format!("unsupported precision {p}"))),
    };

    let mut loaded = Vec::with_capacity(header.tensors.len());
    for entry in &header.tensors {
        let count: usize = entry.shape.iter().product();
        let mut raw = vec![0u8; count * width];
        input.read_exact(&mut raw).map_err(io)?;
        let data: Vec<S> = raw
            .chunks_exact(width)
            .map(|c| {
                if width == 8 {
                    S::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                } else {
                    S::of(f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
                }
            })
            .collect();
        loaded.push((entry.name.clone(), Tensor::new(entry.shape.clone(), data)?));
    }

    let features = loaded
        .iter()
        .position(|(name, _)| name == FEATURES)
        .map(|i| loaded.remove(i).1)
        .ok_or_else(|| TsamError::Format("checkpoint lacks node features".into()))?;
    let mut by_name: std::collections::HashMap<String, Tensor<S>> = loaded.into_iter().collect();
    let mut missing = None;
    let params: ModelParams<Tensor<S>> = param_shapes(&header.config).map_named(&mut |name, &[r, c]| {
        by_name.remove(name).unwrap_or_else(|| {
            missing.get_or_insert_with(|| name.to_string());
            Tensor::zeros(&[r, c])
        })
    });
    if let Some(name) = missing {
        return Err(TsamError::Format(format!("checkpoint lacks tensor `{name}`")));
    }
    TsamModel::from_parts(header.config, params, NodeFeatures::new(features))
}

pub fn save<S: Scalar>(model: &TsamModel<S>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| TsamError::io(path, e))?;
    write_checkpoint(model, BufWriter::new(file))
}

pub fn load<S: Scalar>(path: &Path) -> Result<TsamModel<S>> {
    let file = File::open(path).map_err(|e| TsamError::io(path, e))?;
    read_checkpoint(BufReader::new(file))
}
