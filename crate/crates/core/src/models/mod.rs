//! The sequence autoencoder and the classifiers it is tuned against.
//!
//! Models are stateless: parameters live in a [`ModelCheckpoint`], get bound
//! onto a tape as leaves for one forward pass, and gradients are read back by
//! parameter name.

mod attention;
mod autoencoder;
mod classifier;
mod lstm;

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use attention::{attend, attend_with_keys, attention_keys, AttentionParams};
pub use autoencoder::{
    decode_free_running, decode_teacher_forced, encode, greedy_decode, init_autoencoder, AeParams, AutoencoderConfig,
    Encoded, TeacherForced, DECODER_PREFIXES,
};
pub use classifier::{
    classify, embed_ids, init_classifier, predict, word_dropout_ids, ClassifierConfig, ClassifierInput,
    ClassifierParams, ClassifierVariant, PairCombiner,
};
pub use lstm::{lstm_step, run_lstm, LstmParams};

use crate::autodiff::{Tape, Tensor, Var};
use crate::checkpoint::ModelCheckpoint;
use crate::error::{Error, Result};

/// Uniform init half-width for weight matrices.
pub const WEIGHT_INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelConfig {
    Autoencoder(AutoencoderConfig),
    Classifier(ClassifierConfig),
}

impl ModelConfig {
    pub fn as_autoencoder(&self) -> Result<&AutoencoderConfig> {
        match self {
            ModelConfig::Autoencoder(c) => Ok(c),
            _ => Err(Error::Contract("expected an autoencoder checkpoint".into())),
        }
    }

    pub fn as_classifier(&self) -> Result<&ClassifierConfig> {
        match self {
            ModelConfig::Classifier(c) => Ok(c),
            _ => Err(Error::Contract("expected a classifier checkpoint".into())),
        }
    }
}

/// Parameters of one checkpoint registered on a tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Registers every tensor as a shared leaf; frozen tensors (or all, when
    /// `trainable` is false) do not track gradients.
    pub fn new(tape: &mut Tape, ckpt: &ModelCheckpoint, trainable: bool) -> Self {
        let vars = ckpt
            .params()
            .map(|(name, p)| (name.clone(), tape.shared_leaf(p.value.clone(), trainable && !p.frozen)))
            .collect();
        Bound { vars }
    }

    /// Binds already-registered variables by name (used by gradient checks).
    pub fn from_vars(vars: BTreeMap<String, Var>) -> Self {
        Bound { vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter `{name}` is not bound")))
    }

    /// Gradients of the last backward pass for every tracked parameter.
    pub fn grads(&self, tape: &Tape) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .filter(|(_, &v)| tape.requires_grad(v))
            .filter_map(|(n, &v)| tape.grad(v).map(|g| (n.clone(), g.clone())))
            .collect()
    }
}

pub(crate) fn uniform_tensor<R: Rng + ?Sized>(shape: &[usize], range: f64, rng: &mut R) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-range..range)).collect()).expect("positive extents")
}

pub(crate) fn check_embeddings(table: &crate::data::EmbeddingTable, vocab_size: usize, dim: usize) -> Result<()> {
    if table.rows() != vocab_size || table.dim() != dim {
        return Err(Error::Dimension(format!(
            "embedding table {}×{} for vocabulary {vocab_size} and dimension {dim}",
            table.rows(),
            table.dim()
        )));
    }
    Ok(())
}
