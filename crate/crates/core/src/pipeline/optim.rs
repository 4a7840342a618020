use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{AdamConfig, Precision, TrainingConfig};
use crate::autodiff::Tensor;
use crate::checkpoint::{Dtype, ModelCheckpoint};
use crate::data::UNK;
use crate::error::{Error, Result};

/// Adam with bias correction, keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub cfg: AdamConfig,
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, cfg: AdamConfig) -> Self {
        Adam {
            lr,
            cfg,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable tensor that has a gradient.
    /// Frozen tensors are never touched, whatever `grads` contains.
    pub fn update(&mut self, ckpt: &mut ModelCheckpoint, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - self.cfg.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.cfg.beta2.powi(self.step as i32);
        for (name, g) in grads {
            let param = ckpt.get(name)?;
            if param.frozen {
                continue;
            }
            if param.value.shape() != g.shape() {
                return Err(Error::Dimension(format!("gradient for `{name}` has the wrong shape")));
            }
            let mut value = (*param.value).clone();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
            for (((p, &gi), mi), vi) in value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * gi;
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * gi * gi;
                *p -= self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.cfg.eps);
            }
            ckpt.set_tensor(name, value)?;
        }
        Ok(())
    }
}

pub fn global_norm(grads: &BTreeMap<String, Tensor>) -> f64 {
    grads.values().flat_map(|g| g.data()).map(|v| v * v).sum::<f64>().sqrt()
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`; returns
/// the norm before clipping.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Tensor>, max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

/// Generator for one example of one epoch, independent of scheduling.
pub fn example_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Generator for the epoch-level shuffle.
pub fn shuffle_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX - epoch as u64);
    rng
}

/// What one example contributes to a batch.
#[derive(Debug, Clone, Default)]
pub struct ExampleOut {
    pub loss: f64,
    pub grads: BTreeMap<String, Tensor>,
    /// Auxiliary sums averaged per batch by the caller (accuracy, agreement, ...).
    pub stats: Vec<f64>,
}

/// Batch statistics returned by [`Trainer::step`].
#[derive(Debug, Clone, Default)]
pub struct BatchOut {
    pub loss_sum: f64,
    pub stats_sum: Vec<f64>,
    pub grad_norm: f64,
}

/// Minibatch driver: per-example tapes evaluated on a worker pool, gradients
/// reduced in example order, then clipping and one optimizer step.
pub struct Trainer {
    pub adam: Adam,
    clip_norm: f64,
    precision: Precision,
    pool: rayon::ThreadPool,
}

impl Trainer {
    pub fn new(cfg: &TrainingConfig) -> Result<Self> {
        Ok(Trainer {
            adam: Adam::new(cfg.learning_rate, cfg.adam),
            clip_norm: cfg.clip_norm,
            precision: cfg.precision,
            pool: thread_pool(cfg.threads)?,
        })
    }

    /// Brings a checkpoint to the configured precision before training.
    pub fn prepare(&self, ckpt: &mut ModelCheckpoint) {
        if self.precision == Precision::F32 {
            ckpt.round_to_f32();
            ckpt.dtype = Dtype::F32;
        }
    }

    pub fn map<T, F>(&self, items: &[usize], f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync,
    {
        self.pool.install(|| items.par_iter().map(|&i| f(i)).collect())
    }

    pub fn step<F>(&mut self, ckpt: &mut ModelCheckpoint, items: &[usize], f: F) -> Result<BatchOut>
    where
        F: Fn(&ModelCheckpoint, usize) -> Result<ExampleOut> + Sync,
    {
        let snapshot = ckpt.clone();
        let outs = self.map(items, |i| f(&snapshot, i))?;
        let mut grads: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut batch = BatchOut::default();
        for out in outs {
            if !out.loss.is_finite() {
                return Err(Error::Numeric(format!("non-finite training loss {}", out.loss)));
            }
            batch.loss_sum += out.loss;
            if batch.stats_sum.len() < out.stats.len() {
                batch.stats_sum.resize(out.stats.len(), 0.0);
            }
            for (acc, s) in batch.stats_sum.iter_mut().zip(&out.stats) {
                *acc += s;
            }
            for (name, g) in out.grads {
                match grads.get_mut(&name) {
                    Some(acc) => acc.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b),
                    None => {
                        grads.insert(name, g);
                    }
                }
            }
        }
        let scale = 1.0 / items.len() as f64;
        for (name, g) in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= scale);
            if name.ends_with(".emb") {
                mask_unk_row(g);
            }
        }
        batch.grad_norm = clip_global_norm(&mut grads, self.clip_norm);
        self.adam.update(ckpt, &grads)?;
        if self.precision == Precision::F32 {
            ckpt.round_to_f32();
        }
        Ok(batch)
    }
}

/// The UNK embedding stays at its random initialization.
fn mask_unk_row(g: &mut Tensor) {
    let cols = g.shape()[1];
    g.data_mut()[UNK * cols..(UNK + 1) * cols].iter_mut().for_each(|v| *v = 0.0);
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Contract(format!("cannot start worker pool: {e}")))
}

/// Consecutive chunks of `order` of at most `size`.
pub fn batches(order: &[usize], size: usize) -> impl Iterator<Item = &[usize]> {
    order.chunks(size.max(1))
}
