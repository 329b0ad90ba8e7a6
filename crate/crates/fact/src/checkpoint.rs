//! Binary checkpoints: `"FACT"`, format version (u32 LE), header length
//! (u64 LE), JSON header, then little-endian `f32` tensor payloads in
//! manifest order.

use std::fs;
use std::io::Write;
use std::path::Path;

use fact_core::model::{FactModel, TokenizerConfig};
use fact_core::tensor::Tensor;
use fact_core::train::{Adam, AdamConfig, TrainConfig, TrainState};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"FACT";
pub const VERSION: u32 = 1;

const FIRST_MOMENT: &str = "adam.first.";
const SECOND_MOMENT: &str = "adam.second.";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad magic bytes {0:?}, expected \"FACT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {found}, expected {VERSION}")]
    BadVersion { found: u32 },
    #[error("truncated checkpoint while reading {what}: need {need} bytes, have {have}")]
    Truncated { what: String, need: u64, have: u64 },
    #[error("checkpoint header: {0}")]
    Header(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset from the start of the payload section.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub config: TokenizerConfig,
    pub train: TrainConfig,
    pub step: u64,
    pub optimizer_updates: u64,
    pub tensors: Vec<ManifestEntry>,
}

pub fn encode(state: &TrainState<f32>) -> Vec<u8> {
    let params = state.model.params();
    let mut tensors: Vec<(String, Vec<usize>, &[f32])> = params
        .iter()
        .map(|(n, t)| (n.to_string(), t.shape().to_vec(), t.data()))
        .collect();
    for (prefix, moments) in [
        (FIRST_MOMENT, &state.optimizer.first),
        (SECOND_MOMENT, &state.optimizer.second),
    ] {
        for ((n, t), m) in params.iter().zip(moments) {
            tensors.push((format!("{prefix}{n}"), t.shape().to_vec(), m.as_slice()));
        }
    }
    let mut offset = 0u64;
    let manifest = tensors
        .iter()
        .map(|(name, shape, data)| {
            let e = ManifestEntry {
                name: name.clone(),
                shape: shape.clone(),
                offset,
            };
            offset += 4 * data.len() as u64;
            e
        })
        .collect();
    let header = Header {
        config: state.model.config().clone(),
        train: state.config.clone(),
        step: state.step,
        optimizer_updates: state.optimizer.t,
        tensors: manifest,
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + offset as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, _, data) in &tensors {
        for v in *data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: u64, what: &str) -> Result<&'a [u8], CheckpointError> {
    if (bytes.len() as u64) < n {
        return Err(CheckpointError::Truncated {
            what: what.to_string(),
            need: n,
            have: bytes.len() as u64,
        });
    }
    let (head, rest) = bytes.split_at(n as usize);
    *bytes = rest;
    Ok(head)
}

pub fn decode(mut bytes: &[u8]) -> Result<TrainState<f32>, CheckpointError> {
    let magic: [u8; 4] = take(&mut bytes, 4, "magic")?.try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(take(&mut bytes, 4, "version")?.try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(CheckpointError::BadVersion { found: version });
    }
    let len = u64::from_le_bytes(take(&mut bytes, 8, "header length")?.try_into().expect("8 bytes"));
    let header: Header =
        serde_json::from_slice(take(&mut bytes, len, "header")?).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let payload = bytes;
    let mut named = Vec::with_capacity(header.tensors.len());
    for e in &header.tensors {
        let numel: usize = e.shape.iter().product();
        let end = e.offset + 4 * numel as u64;
        if end > payload.len() as u64 {
            return Err(CheckpointError::Truncated {
                what: format!("tensor {}", e.name),
                need: end,
                have: payload.len() as u64,
            });
        }
        let data = payload[e.offset as usize..end as usize]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let t =
            Tensor::new(&e.shape, data).map_err(|err| CheckpointError::Header(format!("tensor {}: {err}", e.name)))?;
        named.push((e.name.clone(), t));
    }
    let (moments, params): (Vec<_>, Vec<_>) = named
        .into_iter()
        .partition(|(n, _)| n.starts_with(FIRST_MOMENT) || n.starts_with(SECOND_MOMENT));
    let model =
        FactModel::from_named(header.config.clone(), params).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (name, _) in model.params().iter() {
        for (prefix, dst) in [(FIRST_MOMENT, &mut first), (SECOND_MOMENT, &mut second)] {
            let key = format!("{prefix}{name}");
            let m = moments
                .iter()
                .find(|(n, _)| *n == key)
                .ok_or_else(|| CheckpointError::Header(format!("missing optimizer tensor {key}")))?;
            dst.push(m.1.data().to_vec());
        }
    }
    let mut state = TrainState::new(model, header.train.clone()).map_err(|e| CheckpointError::Header(e.to_string()))?;
    state.step = header.step;
    state.optimizer = Adam {
        config: AdamConfig {
            beta1: header.train.beta1,
            beta2: header.train.beta2,
            eps: header.train.eps,
        },
        t: header.optimizer_updates,
        first,
        second,
    };
    Ok(state)
}

pub fn save(state: &TrainState<f32>, path: &Path) -> Result<(), CheckpointError> {
    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    // Write-then-rename so an interrupted save never leaves a partial file.
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&encode(state)).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load(path: &Path) -> Result<TrainState<f32>, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}
