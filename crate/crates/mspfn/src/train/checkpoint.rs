//! Checkpoint serialization with exact round-trips.
//!
//! Layout: the magic bytes `MSPFN\x01`, a little-endian u64 header length,
//! a JSON header, then the raw payload. The payload holds every parameter
//! tensor as little-endian f32 in store order, followed (when the optimizer
//! is included) by all first moments and then all second moments in the
//! same order. The header records the payload's SHA-256, so corruption is
//! detected before anything is deserialized.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{param_schema, ModelConfig, ParamStore};
use crate::train::adam::AdamState;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"MSPFN\x01";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume a run or run inference.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub step: u64,
    pub rng_state: [u64; 4],
    pub params: ParamStore<f32>,
    pub adam: Option<AdamState<f32>>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: [usize; 4],
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    model: ModelConfig,
    step: u64,
    adam_t: u64,
    rng: [u64; 4],
    has_optimizer: bool,
    tensor_count: usize,
    tensors: Vec<TensorMeta>,
    payload_len: u64,
    payload_sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn push_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut payload = Vec::new();
    for (_, tensor) in ckpt.params.iter() {
        push_f32s(&mut payload, tensor.data());
    }
    if let Some(adam) = &ckpt.adam {
        for idx in 0..ckpt.params.len() {
            push_f32s(&mut payload, adam.moments(idx).0);
        }
        for idx in 0..ckpt.params.len() {
            push_f32s(&mut payload, adam.moments(idx).1);
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        model: ckpt.model.clone(),
        step: ckpt.step,
        adam_t: ckpt.adam.as_ref().map_or(0, AdamState::t),
        rng: ckpt.rng_state,
        has_optimizer: ckpt.adam.is_some(),
        tensor_count: ckpt.params.len(),
        tensors: ckpt
            .params
            .iter()
            .map(|(name, t)| TensorMeta {
                name: name.to_string(),
                shape: t.shape(),
            })
            .collect(),
        payload_len: payload.len() as u64,
        payload_sha256: hex(&Sha256::digest(&payload)),
    };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| Error::CheckpointHeader {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut file = Vec::with_capacity(14 + header_bytes.len() + payload.len());
    file.extend_from_slice(CHECKPOINT_MAGIC);
    file.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    file.extend_from_slice(&header_bytes);
    file.extend_from_slice(&payload);
    fs::write(path, file).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = |msg: &str| Error::CheckpointTruncated {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < 14 {
        return Err(truncated("shorter than the fixed preamble"));
    }
    if &bytes[..6] != CHECKPOINT_MAGIC {
        return Err(Error::CheckpointMagic {
            path: path.to_path_buf(),
        });
    }
    let header_len = u64::from_le_bytes(bytes[6..14].try_into().expect("eight bytes")) as usize;
    if bytes.len() < 14 + header_len {
        return Err(truncated("header extends past end of file"));
    }
    let header: Header =
        serde_json::from_slice(&bytes[14..14 + header_len]).map_err(|e| Error::CheckpointHeader {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            path: path.to_path_buf(),
            found: header.version,
            supported: CHECKPOINT_VERSION,
        });
    }
    let payload = &bytes[14 + header_len..];
    if (payload.len() as u64) < header.payload_len {
        return Err(truncated(&format!(
            "payload holds {} of {} bytes",
            payload.len(),
            header.payload_len
        )));
    }
    if payload.len() as u64 > header.payload_len {
        return Err(Error::CheckpointHeader {
            path: path.to_path_buf(),
            msg: format!(
                "{} unexpected trailing bytes after the payload",
                payload.len() as u64 - header.payload_len
            ),
        });
    }
    if hex(&Sha256::digest(payload)) != header.payload_sha256 {
        return Err(Error::CheckpointChecksum {
            path: path.to_path_buf(),
        });
    }
    let bad_header = |msg: String| Error::CheckpointHeader {
        path: path.to_path_buf(),
        msg,
    };
    if header.tensor_count != header.tensors.len() {
        return Err(bad_header(format!(
            "tensor_count {} disagrees with the {} listed tensors",
            header.tensor_count,
            header.tensors.len()
        )));
    }
    header.model.validate()?;
    let schema = param_schema(&header.model)?;
    if schema.len() != header.tensors.len()
        || schema
            .iter()
            .zip(&header.tensors)
            .any(|(s, t)| s.name != t.name || s.shape != t.shape)
    {
        return Err(bad_header(
            "tensor list does not match the model config's parameter schema".into(),
        ));
    }

    // Sequential cursor over the payload; the store construction visits
    // parameters in schema order, which is exactly the write order.
    let mut cursor = 0usize;
    let mut take = |n_values: usize| -> Result<Vec<f32>> {
        let n_bytes = n_values * 4;
        if cursor + n_bytes > payload.len() {
            return Err(truncated("payload ends inside a tensor"));
        }
        let out = payload[cursor..cursor + n_bytes]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
            .collect();
        cursor += n_bytes;
        Ok(out)
    };
    let params = ParamStore::<f32>::from_schema(&header.model, |_, shape| {
        take(shape.iter().product())
    })?;
    let adam = if header.has_optimizer {
        let sizes: Vec<usize> = params.iter().map(|(_, t)| t.numel()).collect();
        let mut m = Vec::with_capacity(sizes.len());
        for &n in &sizes {
            m.push(take(n)?);
        }
        let mut v = Vec::with_capacity(sizes.len());
        for &n in &sizes {
            v.push(take(n)?);
        }
        Some(AdamState::from_parts(&params, m, v, header.adam_t)?)
    } else {
        None
    };
    if cursor != payload.len() {
        return Err(bad_header(format!(
            "payload has {} bytes beyond the declared tensors",
            payload.len() - cursor
        )));
    }
    Ok(Checkpoint {
        model: header.model,
        step: header.step,
        rng_state: header.rng,
        params,
        adam,
    })
}
