//! Checkpoint byte layout: 8-byte magic, `u32` format version, `u64`
//! parameter count, then every parameter as a little-endian `f32` in
//! [`Layout`](super::Layout) order. A JSON sidecar carries the
//! [`CheckpointMeta`].

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, Params};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"QTMCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub config: ModelConfig,
    pub n_params: usize,
    pub tensors: Vec<TensorInfo>,
}

pub fn encode_checkpoint(params: &Params<f32>) -> (CheckpointMeta, Vec<u8>) {
    let meta = CheckpointMeta {
        format_version: CHECKPOINT_VERSION,
        config: params.config,
        n_params: params.data.len(),
        tensors: params
            .layout
            .tensors
            .iter()
            .map(|t| TensorInfo { name: t.name.clone(), shape: [t.rows, t.cols] })
            .collect(),
    };
    let mut bytes = Vec::with_capacity(HEADER_LEN + 4 * params.data.len());
    bytes.extend_from_slice(&CHECKPOINT_MAGIC);
    bytes.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(params.data.len() as u64).to_le_bytes());
    for v in &params.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    (meta, bytes)
}

pub fn decode_checkpoint(meta: &CheckpointMeta, bytes: &[u8]) -> Result<Params<f32>> {
    let fail = |m: String| Error::Checkpoint(m);
    if meta.format_version != CHECKPOINT_VERSION {
        return Err(fail(format!(
            "sidecar version: expected {CHECKPOINT_VERSION}, found {}",
            meta.format_version
        )));
    }
    let mut params = Params::<f32>::zeros(meta.config)?;
    let expected = params.data.len();
    if meta.n_params != expected {
        return Err(fail(format!("sidecar n_params: expected {expected}, found {}", meta.n_params)));
    }
    if meta.tensors.len() != params.layout.tensors.len() {
        return Err(fail(format!(
            "tensor count: expected {}, found {}",
            params.layout.tensors.len(),
            meta.tensors.len()
        )));
    }
    for (want, got) in params.layout.tensors.iter().zip(&meta.tensors) {
        if want.name != got.name || [want.rows, want.cols] != got.shape {
            return Err(fail(format!(
                "tensor {}: expected {}x{}, found {} {}x{}",
                want.name, want.rows, want.cols, got.name, got.shape[0], got.shape[1]
            )));
        }
    }
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!("truncated header: {} bytes", bytes.len())));
    }
    if bytes[..8] != CHECKPOINT_MAGIC {
        return Err(fail("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(fail(format!("version: expected {CHECKPOINT_VERSION}, found {version}")));
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if count != expected {
        return Err(fail(format!("parameter count: expected {expected}, found {count}")));
    }
    let body = &bytes[HEADER_LEN..];
    if body.len() != 4 * expected {
        return Err(fail(format!("payload: expected {} bytes, found {}", 4 * expected, body.len())));
    }
    for (v, chunk) in params.data.iter_mut().zip(body.chunks_exact(4)) {
        *v = f32::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(params)
}
