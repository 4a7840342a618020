use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relax::DEFAULT_TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Adapt,
    TrainClf,
    Finetune,
    FlipFinetune,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Adapt => "adapt",
            Phase::TrainClf => "train_clf",
            Phase::Finetune => "finetune",
            Phase::FlipFinetune => "flip_finetune",
        }
    }
}

/// Numeric precision of stored parameters. Arithmetic is always carried out
/// in `f64`; `F32` rounds parameters to single precision after every update
/// and stores `f32` payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => Err(Error::Contract(format!("unknown precision `{s}` (expected f32 or f64)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Hyperparameters of one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub phase: Phase,
    pub learning_rate: f64,
    /// Gumbel-Softmax temperature (fine-tuning only).
    pub tau: f64,
    /// Probability of replacing a generated token by UNK before the classifier reads it.
    pub word_dropout_rate: f64,
    /// Weight λ of the `1 − cos` similarity term (flip fine-tuning only).
    pub cosine_loss_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Generated length cap as a multiple of the original length (rounded up).
    pub max_len_factor: f64,
    pub seed: u64,
    pub precision: Precision,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Token accuracy that counts as a converged autoencoder.
    pub target_accuracy: f64,
    /// Fraction of the pretraining corpus held out for the accuracy gate.
    pub heldout_fraction: f64,
    /// Worker threads. Results do not depend on this, so it is left out of
    /// serialized configs and checkpoint fingerprints.
    #[serde(skip, default = "one_thread")]
    pub threads: usize,
    pub adam: AdamConfig,
}

fn one_thread() -> usize {
    1
}

impl TrainingConfig {
    pub fn new(phase: Phase) -> Self {
        let (learning_rate, epochs, batch_size) = match phase {
            Phase::Pretrain => (2e-3, 10, 4),
            Phase::Adapt => (1e-3, 10, 16),
            Phase::TrainClf => (1e-3, 10, 32),
            Phase::Finetune | Phase::FlipFinetune => (5e-5, 10, 16),
        };
        TrainingConfig {
            phase,
            learning_rate,
            tau: DEFAULT_TAU,
            word_dropout_rate: 0.1,
            cosine_loss_weight: 1.0,
            epochs,
            batch_size,
            max_len_factor: 1.5,
            seed: 0,
            precision: Precision::F64,
            clip_norm: 5.0,
            target_accuracy: 0.99,
            heldout_fraction: 0.1,
            threads: 1,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.word_dropout_rate) {
            return bad(format!("word dropout rate {} outside [0, 1)", self.word_dropout_rate));
        }
        if !(self.tau > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.tau));
        }
        if !(self.cosine_loss_weight >= 0.0) {
            return bad(format!("cosine loss weight must be non-negative, got {}", self.cosine_loss_weight));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.max_len_factor >= 1.0) {
            return bad(format!("length factor must be at least 1, got {}", self.max_len_factor));
        }
        if !(self.clip_norm > 0.0) {
            return bad(format!("clip norm must be positive, got {}", self.clip_norm));
        }
        if !(0.0..1.0).contains(&self.heldout_fraction) {
            return bad(format!("held-out fraction {} outside [0, 1)", self.heldout_fraction));
        }
        Ok(())
    }

    /// Generation cap for an input of `len` tokens.
    pub fn max_generated_len(&self, len: usize) -> usize {
        ((len as f64 * self.max_len_factor).ceil() as usize).max(1)
    }

    pub(crate) fn expect_phase(&self, allowed: &[Phase]) -> Result<()> {
        if !allowed.contains(&self.phase) {
            return Err(Error::Contract(format!(
                "configuration is for phase `{}`, expected one of {:?}",
                self.phase.name(),
                allowed.iter().map(|p| p.name()).collect::<Vec<_>>()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for phase in [Phase::Pretrain, Phase::Adapt, Phase::TrainClf, Phase::Finetune, Phase::FlipFinetune] {
            let cfg = TrainingConfig::new(phase);
            cfg.validate().unwrap();
            assert_eq!(cfg.tau, 0.9);
        }
        assert_eq!(TrainingConfig::new(Phase::Finetune).learning_rate, 5e-5);
        assert_eq!(TrainingConfig::new(Phase::FlipFinetune).word_dropout_rate, 0.1);
    }

    #[test]
    fn invariants_are_enforced() {
        let base = TrainingConfig::new(Phase::Finetune);
        let cases: Vec<Box<dyn Fn(&mut TrainingConfig)>> = vec![
            Box::new(|c| c.learning_rate = 0.0),
            Box::new(|c| c.word_dropout_rate = 1.0),
            Box::new(|c| c.word_dropout_rate = -0.1),
            Box::new(|c| c.tau = 0.0),
            Box::new(|c| c.cosine_loss_weight = -1.0),
            Box::new(|c| c.learning_rate = f64::NAN),
        ];
        for mutate in cases {
            let mut c = base.clone();
            mutate(&mut c);
            assert!(matches!(c.validate(), Err(Error::Contract(_))));
        }
    }

    #[test]
    fn length_cap_rounds_up() {
        let c = TrainingConfig::new(Phase::Finetune);
        assert_eq!(c.max_generated_len(4), 6);
        assert_eq!(c.max_generated_len(5), 8);
        assert_eq!(c.max_generated_len(0), 1);
    }

    #[test]
    fn serde_round_trip() {
        let c = TrainingConfig::new(Phase::FlipFinetune);
        let back: TrainingConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
