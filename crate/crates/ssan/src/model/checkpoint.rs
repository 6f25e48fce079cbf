//! Checkpoint serialization.
//!
//! Layout: magic `SSANCKPT`, little-endian u32 format version (= 1),
//! little-endian u64 header byte length, a UTF-8 JSON header carrying the
//! model config, rng state, training step and the tensor manifest
//! (name, shape, payload byte offset), then raw little-endian f64 tensor
//! payloads in manifest order. Saving is byte-deterministic.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tensor::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SSANCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serializable ChaCha state: hex seed plus stream word position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> RngState {
        let seed = rng.get_seed();
        let mut hex = String::with_capacity(64);
        for byte in seed {
            hex.push_str(&format!("{byte:02x}"));
        }
        RngState {
            seed: hex,
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        if self.seed.len() != 64 {
            return Err(Error::Format("rng seed must be 32 hex bytes".into()));
        }
        let mut seed = [0u8; 32];
        for (i, chunk) in seed.iter_mut().enumerate() {
            *chunk = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::Format("bad hex in rng seed".into()))?;
        }
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Format("bad rng word position".into()))?;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    rng: RngState,
    step: u64,
    manifest: Vec<ManifestEntry>,
}

/// A saved (or about-to-be-saved) model snapshot: config, parameters in
/// canonical order, rng state and training step.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: Vec<(String, Tensor)>,
    pub rng: RngState,
    pub step: u64,
}

impl Checkpoint {
    pub fn from_model(model: &Model, rng: RngState, step: u64) -> Checkpoint {
        Checkpoint {
            config: model.config.clone(),
            params: model
                .params
                .iter()
                .map(|(name, tensor)| (name.to_string(), tensor.clone()))
                .collect(),
            rng,
            step,
        }
    }

    /// Rebuild a runnable model; optimizer moments restart at zero.
    pub fn into_model(self) -> Result<Model> {
        self.config.validate()?;
        let mut params = ParamStore::new();
        for (name, tensor) in self.params {
            params.insert(&name, tensor)?;
        }
        params.set_step(self.step);
        let model = Model {
            config: self.config,
            params,
        };
        // The parameter inventory must match what the config predicts.
        let fresh = Model::new(model.config.clone())?;
        let expected: Vec<&str> = fresh.params.names().collect();
        let actual: Vec<&str> = model.params.names().collect();
        if expected != actual {
            return Err(Error::Format(format!(
                "checkpoint parameters {actual:?} do not match config inventory {expected:?}"
            )));
        }
        for (name, tensor) in model.params.iter() {
            let want = fresh.params.get(name).expect("same inventory");
            if want.shape() != tensor.shape() {
                return Err(Error::Format(format!(
                    "checkpoint tensor {name} has shape {:?}, config expects {:?}",
                    tensor.shape(),
                    want.shape()
                )));
            }
        }
        Ok(model)
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let mut manifest = Vec::with_capacity(checkpoint.params.len());
    let mut offset = 0u64;
    for (name, tensor) in &checkpoint.params {
        manifest.push(ManifestEntry {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            offset,
        });
        offset += (tensor.numel() * 8) as u64;
    }
    let header = Header {
        config: checkpoint.config.clone(),
        rng: checkpoint.rng.clone(),
        step: checkpoint.step,
        manifest,
    };
    let header_json =
        serde_json::to_string(&header).map_err(|e| Error::Format(format!("header encode: {e}")))?;
    let header_bytes = header_json.as_bytes();

    let mut out = Vec::with_capacity(20 + header_bytes.len() + offset as usize);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(header_bytes);
    for (_, tensor) in &checkpoint.params {
        for &value in tensor.data() {
            out.extend_from_slice(&value.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    if bytes.len() < 20 {
        return Err(Error::Format("checkpoint truncated before header".into()));
    }
    if &bytes[0..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version > CHECKPOINT_VERSION {
        return Err(Error::Format(format!(
            "unsupported checkpoint version {version} (newest supported is {CHECKPOINT_VERSION})"
        )));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .ok_or_else(|| Error::Format("absurd header length".into()))?;
    if bytes.len() < header_end {
        return Err(Error::Format("checkpoint truncated inside header".into()));
    }
    let header_text = std::str::from_utf8(&bytes[20..header_end])
        .map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let header: Header = serde_json::from_str(header_text)
        .map_err(|e| Error::Format(format!("header decode: {e}")))?;

    let payload = &bytes[header_end..];
    let mut params = Vec::with_capacity(header.manifest.len());
    for entry in &header.manifest {
        let numel: usize = entry.shape.iter().product();
        let start = entry.offset as usize;
        let end = start
            .checked_add(numel * 8)
            .ok_or_else(|| Error::Format("absurd tensor offset".into()))?;
        if payload.len() < end {
            return Err(Error::Format(format!(
                "checkpoint truncated inside tensor {}",
                entry.name
            )));
        }
        let data: Vec<f64> = payload[start..end]
            .chunks_exact(8)
            .map(|chunk| f64::from_le_bytes(chunk.try_into().unwrap()))
            .collect();
        let tensor = Tensor::new(entry.shape.clone(), data)
            .map_err(|e| Error::Format(format!("tensor {}: {e}", entry.name)))?;
        params.push((entry.name.clone(), tensor));
    }
    Ok(Checkpoint {
        config: header.config,
        params,
        rng: header.rng,
        step: header.step,
    })
}
