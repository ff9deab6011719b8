//! Binary checkpoints.
//!
//! Layout: magic `PTRI`, `u32` format version, `u64` header length, a JSON
//! header (name, input shape, layer specs, tensor names and shapes, free-form
//! metadata), then every parameter tensor as little-endian `f32` in header
//! order. All integers are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kernels::Shape;
use super::layer::LayerSpec;
use super::ModelGraph;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PTRI";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub name: String,
    pub input_shape: Shape,
    pub layers: Vec<LayerSpec>,
    pub tensors: Vec<TensorEntry>,
    pub param_count: usize,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

fn header_for(model: &ModelGraph<f32>, metadata: serde_json::Value) -> CheckpointHeader {
    CheckpointHeader {
        name: model.name().to_owned(),
        input_shape: model.input_shape(),
        layers: model.layers().to_vec(),
        tensors: model
            .param_slots()
            .into_iter()
            .map(|s| TensorEntry {
                name: s.name,
                shape: s.shape,
            })
            .collect(),
        param_count: model.param_count(),
        metadata,
    }
}

pub fn encode_checkpoint(model: &ModelGraph<f32>, metadata: serde_json::Value) -> Vec<u8> {
    let header = serde_json::to_vec(&header_for(model, metadata)).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + 4 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for &p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelGraph<f32>, CheckpointHeader)> {
    if bytes.len() < 16 {
        return Err(format_err("checkpoint truncated before header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(format_err("not a checkpoint: bad magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(format_err(format!(
            "checkpoint version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let header_end = usize::try_from(header_len)
        .ok()
        .and_then(|n| n.checked_add(16))
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| format_err("checkpoint truncated inside header"))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| format_err(format!("checkpoint header: {e}")))?;
    let mut model = ModelGraph::<f32>::new(header.name.clone(), header.input_shape, header.layers.clone())?;
    let slots = model.param_slots();
    let listed: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if header.tensors.len() != slots.len()
        || header
            .tensors
            .iter()
            .zip(&slots)
            .any(|(t, s)| t.name != s.name || t.shape != s.shape)
        || listed != header.param_count
        || header.param_count != model.param_count()
    {
        return Err(format_err("checkpoint tensor table does not match its layers"));
    }
    let blob = &bytes[header_end..];
    let expected = 4 * header.param_count;
    if blob.len() < expected {
        return Err(format_err(format!(
            "checkpoint truncated: {} of {expected} parameter bytes",
            blob.len()
        )));
    }
    if blob.len() > expected {
        return Err(format_err("trailing bytes after checkpoint parameters"));
    }
    for (p, chunk) in model.params_mut().iter_mut().zip(blob.chunks_exact(4)) {
        *p = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
    }
    if model.params().iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric("checkpoint holds non-finite parameters".to_owned()));
    }
    Ok((model, header))
}

pub fn save_checkpoint_with(
    model: &ModelGraph<f32>,
    metadata: serde_json::Value,
    path: &Path,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode_checkpoint(model, metadata)).map_err(|e| Error::io(path, e))
}

pub fn save_checkpoint(model: &ModelGraph<f32>, path: &Path) -> Result<()> {
    save_checkpoint_with(model, serde_json::Value::Null, path)
}

pub fn load_checkpoint_with(path: &Path) -> Result<(ModelGraph<f32>, CheckpointHeader)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelGraph<f32>> {
    Ok(load_checkpoint_with(path)?.0)
}
