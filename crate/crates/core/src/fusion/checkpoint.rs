//! Parameter checkpoints: one JSON header line (config, optional gene scaler and a
//! tensor manifest), then every tensor as little-endian f32 in manifest order.
//!
//! Parameters live in f64 while training and are rounded to f32 on save, so a
//! loaded checkpoint re-saves to identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{ModelParams, ParamStore, VaeParams};
use super::FusionConfig;
use crate::data::GeneScaler;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const FORMAT: &str = "biofusion-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckpointKind {
    Vae,
    Model,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset from the start of the payload.
    offset: usize,
    /// Number of f32 values.
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kind: CheckpointKind,
    config: FusionConfig,
    gene_scaler: Option<GeneScaler>,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub kind: CheckpointKind,
    pub config: FusionConfig,
    pub store: ParamStore,
    pub gene_scaler: Option<GeneScaler>,
}

fn format_err(offset: usize, detail: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, detail: detail.into() }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut tensors = Vec::with_capacity(ck.store.len());
    let mut offset = 0;
    for (name, t) in ck.store.iter() {
        tensors.push(TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), offset, len: t.len() });
        offset += 4 * t.len();
    }
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        kind: ck.kind,
        config: ck.config.clone(),
        gene_scaler: ck.gene_scaler.clone(),
        tensors,
    };
    let mut out = serde_json::to_vec(&header)?;
    out.push(b'\n');
    let base = out.len();
    out.reserve(offset);
    for (name, t) in ck.store.iter() {
        for &v in t.data() {
            let f = v as f32;
            if !f.is_finite() {
                log::error!("parameter {name} holds {v}, not representable as a finite f32");
                return Err(Error::NonFinite { op: "checkpoint" });
            }
            out.extend_from_slice(&f.to_le_bytes());
        }
    }
    debug_assert_eq!(out.len(), base + offset);
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let newline =
        bytes.iter().position(|&b| b == b'\n').ok_or_else(|| format_err(bytes.len(), "missing header line"))?;
    let header: Header = serde_json::from_slice(&bytes[..newline])
        .map_err(|e| format_err(e.column().saturating_sub(1), e.to_string()))?;
    if header.format != FORMAT {
        return Err(format_err(0, format!("unknown format '{}'", header.format)));
    }
    if header.version != VERSION {
        return Err(format_err(0, format!("unsupported version {}", header.version)));
    }
    let base = newline + 1;
    let payload = &bytes[base..];
    let mut store = ParamStore::new();
    let mut expected_end = 0;
    for e in &header.tensors {
        if e.shape.iter().product::<usize>() != e.len {
            return Err(format_err(0, format!("tensor {} shape {:?} does not hold {} values", e.name, e.shape, e.len)));
        }
        let end = e.offset + 4 * e.len;
        if e.offset != expected_end {
            return Err(format_err(base + e.offset, format!("tensor {} is not contiguous", e.name)));
        }
        if end > payload.len() {
            return Err(format_err(bytes.len(), format!("payload truncated inside tensor {}", e.name)));
        }
        let mut data = Vec::with_capacity(e.len);
        for (k, chunk) in payload[e.offset..end].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            if !v.is_finite() {
                return Err(format_err(base + e.offset + 4 * k, format!("non-finite value in tensor {}", e.name)));
            }
            data.push(f64::from(v));
        }
        if store.get(&e.name).is_some() {
            return Err(format_err(0, format!("duplicate tensor {}", e.name)));
        }
        store.push(e.name.clone(), Tensor::new(e.shape.clone(), data)?);
        expected_end = end;
    }
    if payload.len() != expected_end {
        return Err(format_err(base + expected_end, "trailing bytes after the last tensor"));
    }
    Ok(Checkpoint { kind: header.kind, config: header.config, store, gene_scaler: header.gene_scaler })
}

pub fn write_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<u64> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(ck)?;
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    Ok(bytes.len() as u64)
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

impl VaeParams {
    pub fn to_checkpoint(&self, cfg: &FusionConfig) -> Checkpoint {
        Checkpoint { kind: CheckpointKind::Vae, config: cfg.clone(), store: self.store.clone(), gene_scaler: None }
    }
}

impl ModelParams {
    pub fn to_checkpoint(&self, cfg: &FusionConfig) -> Checkpoint {
        Checkpoint {
            kind: CheckpointKind::Model,
            config: cfg.clone(),
            store: self.store.clone(),
            gene_scaler: self.gene_scaler.clone(),
        }
    }
}

impl Checkpoint {
    pub fn into_vae(self) -> Result<(FusionConfig, VaeParams)> {
        match self.kind {
            CheckpointKind::Vae => Ok((self.config, VaeParams { store: self.store })),
            CheckpointKind::Model => Err(Error::Validation("expected a VAE checkpoint, found a model".into())),
        }
    }

    pub fn into_model(self) -> Result<(FusionConfig, ModelParams)> {
        match self.kind {
            CheckpointKind::Model => {
                Ok((self.config, ModelParams { store: self.store, gene_scaler: self.gene_scaler }))
            }
            CheckpointKind::Vae => Err(Error::Validation("expected a model checkpoint, found a VAE".into())),
        }
    }

    /// Size in bytes of the encoded checkpoint.
    pub fn encoded_len(&self) -> Result<u64> {
        Ok(encode_checkpoint(self)?.len() as u64)
    }
}
