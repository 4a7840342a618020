use serde::{Deserialize, Serialize};

use super::config::Phase;

/// Per-epoch training summary. Fields that do not apply to a phase are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss.
    pub loss: f64,
    /// Training-side accuracy: token accuracy (autoencoder), label accuracy
    /// (classifier), or classifier agreement with the target label (fine-tuning).
    pub accuracy: f64,
    /// Accuracy on the held-out slice, when one is evaluated.
    pub heldout_accuracy: Option<f64>,
    /// Mean classifier cross-entropy on generated text (fine-tuning).
    pub classifier_ce: Option<f64>,
    /// Mean `1 − cos` similarity term (flip fine-tuning).
    pub cosine_term: Option<f64>,
    /// Mean pre-clipping global gradient norm.
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub phase: Phase,
    /// Held-out accuracy before the first update, when evaluated.
    pub initial_accuracy: Option<f64>,
    pub epochs: Vec<EpochRecord>,
    /// Whether the phase's accuracy target was reached.
    pub gate_met: bool,
}

impl TrainingLog {
    pub fn new(phase: Phase) -> Self {
        TrainingLog {
            phase,
            initial_accuracy: None,
            epochs: Vec::new(),
            gate_met: false,
        }
    }

    pub fn heldout_curve(&self) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.heldout_accuracy).collect()
    }

    pub fn final_heldout(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.heldout_accuracy).or(self.initial_accuracy)
    }
}

/// Running means over one epoch.
#[derive(Debug, Default)]
pub(crate) struct EpochAccumulator {
    pub examples: usize,
    pub loss: f64,
    pub stats: Vec<f64>,
    pub grad_norm: f64,
    pub batches: usize,
}

impl EpochAccumulator {
    pub fn add(&mut self, n: usize, batch: &super::optim::BatchOut) {
        self.examples += n;
        self.loss += batch.loss_sum;
        if self.stats.len() < batch.stats_sum.len() {
            self.stats.resize(batch.stats_sum.len(), 0.0);
        }
        for (a, b) in self.stats.iter_mut().zip(&batch.stats_sum) {
            *a += b;
        }
        self.grad_norm += batch.grad_norm;
        self.batches += 1;
    }

    pub fn mean_loss(&self) -> f64 {
        self.loss / self.examples.max(1) as f64
    }

    pub fn stat(&self, i: usize) -> f64 {
        self.stats.get(i).copied().unwrap_or(0.0)
    }

    pub fn mean_grad_norm(&self) -> f64 {
        self.grad_norm / self.batches.max(1) as f64
    }
}
