//! Binary checkpoint container.
//!
//! Layout: the 8-byte magic `NLDMCKPT`, a little-endian `u32` version, a
//! little-endian `u64` header length, a UTF-8 JSON header, then every array
//! named in the header as little-endian `f64` values in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EpochLog, TrainConfig};
use crate::autodiff::{ParamStore, Tensor};
use crate::data::LabelSet;
use crate::encoder::Vocab;
use crate::error::{Error, Result};
use crate::models::{param_shapes, Model, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"NLDMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model with everything needed to apply it to raw text.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub vocab: Vocab,
    pub labels: LabelSet,
    pub train: Option<TrainConfig>,
    pub history: Vec<EpochLog>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArrayMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    labels: LabelSet,
    #[serde(default)]
    train: Option<TrainConfig>,
    #[serde(default)]
    history: Vec<EpochLog>,
    arrays: Vec<ArrayMeta>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.model.config.clone(),
            vocab: self.vocab.clone(),
            labels: self.labels.clone(),
            train: self.train.clone(),
            history: self.history.clone(),
            arrays: self
                .model
                .params
                .iter()
                .map(|(name, t)| ArrayMeta {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| corrupt(format!("encoding header: {e}")))?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.model.params.num_values());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.model.params.iter() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Decodes and validates a checkpoint; never panics on bad input.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let rest = bytes
            .strip_prefix(CHECKPOINT_MAGIC.as_slice())
            .ok_or_else(|| corrupt("not a checkpoint (bad magic)"))?;
        if rest.len() < 12 {
            return Err(corrupt("truncated preamble"));
        }
        let version = u32::from_le_bytes(rest[..4].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(rest[4..12].try_into().expect("8 bytes"));
        let rest = &rest[12..];
        let header_len = usize::try_from(header_len)
            .ok()
            .filter(|&l| l <= rest.len())
            .ok_or_else(|| corrupt("header length exceeds file"))?;
        let header: Header = serde_json::from_slice(&rest[..header_len])
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        let mut payload = &rest[header_len..];

        header.config.validate()?;
        if header.vocab.len() != header.config.vocab_size {
            return Err(corrupt(format!(
                "vocabulary has {} entries, config says {}",
                header.vocab.len(),
                header.config.vocab_size
            )));
        }
        if header.labels.len() != header.config.num_labels {
            return Err(corrupt(format!(
                "label set has {} entries, config says {}",
                header.labels.len(),
                header.config.num_labels
            )));
        }
        let expected = expected_shapes(&header.config)?;
        if expected.len() != header.arrays.len() {
            return Err(corrupt(format!(
                "{} arrays stored, model needs {}",
                header.arrays.len(),
                expected.len()
            )));
        }
        let mut params = ParamStore::new();
        for meta in &header.arrays {
            match expected.iter().find(|(n, _)| *n == meta.name) {
                Some((_, shape)) if *shape == meta.shape => {}
                Some((_, shape)) => {
                    return Err(corrupt(format!(
                        "array {} has shape {:?}, expected {shape:?}",
                        meta.name, meta.shape
                    )))
                }
                None => return Err(corrupt(format!("unexpected array {}", meta.name))),
            }
            let len: usize = meta.shape.iter().product();
            let nbytes = len
                .checked_mul(8)
                .filter(|&b| b <= payload.len())
                .ok_or_else(|| corrupt(format!("array {} is truncated", meta.name)))?;
            let data: Vec<f64> = payload[..nbytes]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            payload = &payload[nbytes..];
            params
                .insert(&meta.name, Tensor::new(meta.shape.clone(), data)?)
                .map_err(|_| corrupt(format!("duplicate array {}", meta.name)))?;
        }
        if !payload.is_empty() {
            return Err(corrupt(format!("{} trailing bytes", payload.len())));
        }
        Ok(Checkpoint {
            model: Model {
                config: header.config,
                params,
            },
            vocab: header.vocab,
            labels: header.labels,
            train: header.train,
            history: header.history,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn expected_shapes(config: &ModelConfig) -> Result<Vec<(String, Vec<usize>)>> {
    // keep the shape arithmetic below from overflowing on hostile headers
    let d = [config.d_x, config.d_h, config.d_l, config.d_r, config.num_labels];
    if config.vocab_size > 1 << 28 || d.iter().any(|&x| x > 1 << 16) {
        return Err(corrupt("dimension too large"));
    }
    Ok(param_shapes(config)
        .into_iter()
        .map(|(n, s)| (n.to_string(), s))
        .collect())
}
