//! Checkpoint files.
//!
//! ```text
//! "INNPAR01" | u32 LE header length | JSON header | f32 LE payloads
//! ```
//!
//! The header holds the model config, a tensor directory (name, shape, byte
//! offset into the payload, element count) and run metadata. Payloads are
//! concatenated in directory order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{init_model, InnPar, ModelConfig};
use crate::autodiff::Parameterized;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor3};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"INNPAR01";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub epoch: usize,
    /// Hex SHA-256 over the little-endian f32 loss history, empty if none.
    pub loss_digest: String,
}

impl CheckpointMeta {
    pub fn new(epoch: usize, losses: &[f64]) -> Self {
        let loss_digest = if losses.is_empty() {
            String::new()
        } else {
            let mut h = Sha256::new();
            for l in losses {
                h.update((*l as f32).to_le_bytes());
            }
            h.finalize().iter().map(|b| format!("{b:02x}")).collect()
        };
        Self { epoch, loss_digest }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 3],
    offset: usize,
    count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    metadata: CheckpointMeta,
}

pub fn encode_checkpoint<T: Scalar>(model: &InnPar<T>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for p in model.params() {
        let (b, c, l) = p.value.shape();
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: [b, c, l],
            offset: payload.len(),
            count: p.numel(),
        });
        for v in p.value.data() {
            payload.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let header = serde_json::to_vec(&Header {
        config: model.config().clone(),
        tensors,
        metadata: meta.clone(),
    })?;
    let mut out = Vec::with_capacity(12 + header.len() + payload.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<(InnPar<T>, CheckpointMeta)> {
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::format_at_offset(0, "bad magic, expected \"INNPAR01\""));
    }
    if bytes.len() < 12 {
        return Err(Error::format_at_offset(8, "truncated before header length"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload_start = 12 + header_len;
    if bytes.len() < payload_start {
        return Err(Error::format_at_offset(
            bytes.len(),
            format!("truncated header: declared {header_len} bytes"),
        ));
    }
    let header: Header = serde_json::from_slice(&bytes[12..payload_start])
        .map_err(|e| Error::format_at_offset(12, format!("header JSON: {e}")))?;
    header.config.validate()?;

    let mut model: InnPar<T> = init_model(&header.config, 0)?;
    let payload = &bytes[payload_start..];
    {
        let mut params = model.params_mut();
        if params.len() != header.tensors.len() {
            return Err(Error::format_at_offset(
                12,
                format!(
                    "directory lists {} tensors, config implies {}",
                    header.tensors.len(),
                    params.len()
                ),
            ));
        }
        let mut expected_offset = 0;
        for (p, entry) in params.iter_mut().zip(&header.tensors) {
            let (b, c, l) = p.value.shape();
            if entry.name != p.name || entry.shape != [b, c, l] || entry.count != b * c * l {
                return Err(Error::format_at_offset(
                    12,
                    format!(
                        "directory entry {} {:?} does not match expected {} {:?}",
                        entry.name, entry.shape, p.name, [b, c, l]
                    ),
                ));
            }
            if entry.offset != expected_offset {
                return Err(Error::format_at_offset(
                    payload_start + entry.offset,
                    format!("tensor {} at unexpected payload offset", entry.name),
                ));
            }
            let end = entry.offset + 4 * entry.count;
            if end > payload.len() {
                return Err(Error::format_at_offset(
                    bytes.len(),
                    format!(
                        "truncated payload: tensor {} needs bytes {}..{}",
                        entry.name,
                        payload_start + entry.offset,
                        payload_start + end
                    ),
                ));
            }
            let data: Vec<T> = payload[entry.offset..end]
                .chunks_exact(4)
                .map(|ch| T::of(f32::from_le_bytes(ch.try_into().expect("4 bytes")) as f64))
                .collect();
            p.value = Tensor3::new(b, c, l, data)
                .map_err(|e| Error::format_at_offset(payload_start + entry.offset, e.to_string()))?;
            expected_offset = end;
        }
        if expected_offset != payload.len() {
            return Err(Error::format_at_offset(
                payload_start + expected_offset,
                format!("{} trailing bytes", payload.len() - expected_offset),
            ));
        }
    }
    for (i, block) in model.blocks.iter().enumerate() {
        let det = block.mix.determinant();
        if !(det.abs() > 1e-12) {
            return Err(Error::Numeric(format!(
                "block{i} 1x1 weight is near-singular: |det W| = {:e}",
                det.abs()
            )));
        }
    }
    Ok((model, header.metadata))
}

pub fn save_checkpoint<T: Scalar>(
    model: &InnPar<T>,
    path: impl AsRef<Path>,
    meta: &CheckpointMeta,
) -> Result<()> {
    let bytes = encode_checkpoint(model, meta)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(InnPar<T>, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}
