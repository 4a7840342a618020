//! Named-tensor checkpoints and their on-disk container.
//!
//! File layout:
//!
//! ```text
//! b"SIFTCKPT"            8-byte magic
//! u64 LE                 header length in bytes
//! header                 UTF-8 JSON (see `Header`)
//! payload                tensors in header order, little-endian f64 or f32
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::models::ModelConfig;

const MAGIC: &[u8; 8] = b"SIFTCKPT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F64,
    F32,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F64 => 8,
            Dtype::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Arc<Tensor>,
    pub frozen: bool,
}

/// Parameters of one model plus the provenance needed to reload it.
///
/// Clones share tensor buffers, so snapshots are cheap and can be handed to
/// worker threads freely.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: ModelConfig,
    params: BTreeMap<String, Param>,
    /// Hash of the model and training configuration that produced this state.
    pub fingerprint: String,
    pub vocab_hash: String,
    pub dtype: Dtype,
    /// Free-form run facts (accuracy gates, epochs run, ...).
    pub meta: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    dtype: Dtype,
    fingerprint: String,
    vocab_hash: String,
    meta: BTreeMap<String, serde_json::Value>,
    tensors: Vec<TensorEntry>,
}

impl ModelCheckpoint {
    pub fn new(model: ModelConfig, vocab_hash: impl Into<String>) -> Self {
        let fingerprint = fingerprint_of(&model);
        ModelCheckpoint {
            model,
            params: BTreeMap::new(),
            fingerprint,
            vocab_hash: vocab_hash.into(),
            dtype: Dtype::F64,
            meta: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, frozen: bool) {
        self.params.insert(
            name.into(),
            Param {
                value: Arc::new(value),
                frozen,
            },
        );
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Contract(format!("checkpoint has no tensor `{name}`")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.get(name)?.value)
    }

    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("checkpoint has no tensor `{name}`")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::Dimension(format!(
                "`{name}`: new shape {:?} vs {:?}",
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = Arc::new(value);
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn freeze_all(&mut self) {
        self.params.values_mut().for_each(|p| p.frozen = true);
    }

    /// Freezes exactly the tensors for which `frozen(name)` holds.
    pub fn set_frozen_by(&mut self, frozen: impl Fn(&str) -> bool) {
        for (name, p) in self.params.iter_mut() {
            p.frozen = frozen(name);
        }
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.params.iter().filter(|(_, p)| !p.frozen).map(|(n, _)| n.clone()).collect()
    }

    /// SHA-256 of every frozen tensor, keyed by name.
    pub fn frozen_hashes(&self) -> BTreeMap<String, String> {
        self.params
            .iter()
            .filter(|(_, p)| p.frozen)
            .map(|(n, p)| (n.clone(), p.value.sha256()))
            .collect()
    }

    pub fn tensor_hashes(&self) -> BTreeMap<String, String> {
        self.params.iter().map(|(n, p)| (n.clone(), p.value.sha256())).collect()
    }

    /// Stamps the fingerprint from the model config plus an extra training
    /// description (hyperparameters, optimizer).
    pub fn stamp_fingerprint(&mut self, training: &impl Serialize) {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.model).expect("config serializes"));
        h.update(serde_json::to_vec(training).expect("config serializes"));
        h.update(self.fingerprint.as_bytes());
        self.fingerprint = hex::encode(h.finalize());
    }

    pub fn check_vocab(&self, vocab_hash: &str) -> Result<()> {
        if self.vocab_hash != vocab_hash {
            return Err(Error::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found: vocab_hash.to_string(),
            });
        }
        Ok(())
    }

    /// Rounds every value to single precision (used when training in f32 mode).
    pub fn round_to_f32(&mut self) {
        for p in self.params.values_mut() {
            let mut t = (*p.value).clone();
            t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
            p.value = Arc::new(t);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model.clone(),
            dtype: self.dtype,
            fingerprint: self.fingerprint.clone(),
            vocab_hash: self.vocab_hash.clone(),
            meta: self.meta.clone(),
            tensors: self
                .params
                .iter()
                .map(|(name, p)| TensorEntry {
                    name: name.clone(),
                    shape: p.value.shape().to_vec(),
                    frozen: p.frozen,
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(16 + header.len() + self.num_values() * self.dtype.width());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in self.params.values() {
            for &v in p.value.data() {
                match self.dtype {
                    Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
                    Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let bad = |m: &str| Error::format(origin, 0, m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let width = header.dtype.width();
        let mut pos = 16 + hlen;
        let mut params = BTreeMap::new();
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let raw = bytes.get(pos..pos + n * width).ok_or_else(|| bad("truncated payload"))?;
            let data = raw
                .chunks_exact(width)
                .map(|c| match header.dtype {
                    Dtype::F64 => f64::from_le_bytes(c.try_into().expect("8 bytes")),
                    Dtype::F32 => f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64,
                })
                .collect();
            pos += n * width;
            params.insert(
                entry.name,
                Param {
                    value: Arc::new(Tensor::new(entry.shape, data)?),
                    frozen: entry.frozen,
                },
            );
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(ModelCheckpoint {
            model: header.model,
            params,
            fingerprint: header.fingerprint,
            vocab_hash: header.vocab_hash,
            dtype: header.dtype,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

fn fingerprint_of(model: &ModelConfig) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(model).expect("config serializes")))
}
