//! Binary checkpoint files.
//!
//! Layout: `FCKP`, u16 LE version, u32 LE header length, a UTF-8 JSON header
//! `{spec, config, epoch, seed, tensors: [{name, shape, byte_offset}]}`, then
//! the little-endian `f32` payloads. Offsets count from the first payload
//! byte.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{CheckpointError, Error, Result};
use crate::model::{ModelSpec, Params, Task};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FCKP";
pub const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: Params,
    pub config: TrainConfig,
    pub epoch: usize,
    pub seed: u64,
}

impl Checkpoint {
    pub fn task(&self) -> Task {
        self.spec.task()
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    byte_offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    config: TrainConfig,
    epoch: usize,
    seed: u64,
    tensors: Vec<TensorEntry>,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (name, t) in ckpt.params.named_tensors() {
        tensors.push(TensorEntry {
            name,
            shape: t.shape().to_vec(),
            byte_offset: payload.len(),
        });
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        spec: ckpt.spec.clone(),
        config: ckpt.config.clone(),
        epoch: ckpt.epoch,
        seed: ckpt.seed,
        tensors,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(10 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
    if bytes.len() < n {
        return Err(CheckpointError::Truncated(format!(
            "{what} needs {n} bytes, {} left",
            bytes.len()
        )));
    }
    let (head, rest) = bytes.split_at(n);
    *bytes = rest;
    Ok(head)
}

pub fn decode_checkpoint(mut bytes: &[u8]) -> Result<Checkpoint> {
    let b = &mut bytes;
    let magic: [u8; 4] = take(b, 4, "magic")?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic).into());
    }
    let found = u16::from_le_bytes(take(b, 2, "version")?.try_into().unwrap());
    if found != VERSION {
        return Err(CheckpointError::VersionMismatch {
            found,
            expected: VERSION,
        }
        .into());
    }
    let len = u32::from_le_bytes(take(b, 4, "header length")?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(b, len, "header")?)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    let payload = *b;

    let mut named = Vec::with_capacity(header.tensors.len());
    let mut expected_end = 0;
    for entry in header.tensors {
        let n: usize = entry.shape.iter().product();
        let end = entry.byte_offset + 4 * n;
        if end > payload.len() {
            return Err(CheckpointError::Truncated(format!(
                "tensor {} ends at byte {end} of a {}-byte payload",
                entry.name,
                payload.len()
            ))
            .into());
        }
        let data = payload[entry.byte_offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(entry.shape, data).map_err(|e| CheckpointError::Header(e.to_string()))?;
        named.push((entry.name, t));
        expected_end = expected_end.max(end);
    }
    if expected_end != payload.len() {
        return Err(CheckpointError::Header(format!(
            "{} trailing payload bytes",
            payload.len() - expected_end
        ))
        .into());
    }
    let params = Params::from_named(&header.spec, named)
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    header
        .config
        .validate()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    Ok(Checkpoint {
        spec: header.spec,
        params,
        config: header.config,
        epoch: header.epoch,
        seed: header.seed,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
