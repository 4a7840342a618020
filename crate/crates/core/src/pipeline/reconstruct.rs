use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Phase, TrainingConfig};
use super::log::{EpochAccumulator, EpochRecord, TrainingLog};
use super::optim::{batches, shuffle_rng, thread_pool, ExampleOut, Trainer};
use crate::autodiff::Tape;
use crate::checkpoint::ModelCheckpoint;
use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::models::{decode_teacher_forced, encode, greedy_decode, init_autoencoder, AeParams, AutoencoderConfig, Bound};
use rayon::prelude::*;

fn reconstruction_example(ckpt: &ModelCheckpoint, tokens: &[usize], train: bool) -> Result<ExampleOut> {
    let cfg = ckpt.model.as_autoencoder()?;
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, ckpt, train);
    let p = AeParams::bind(&tape, &bound, cfg)?;
    let enc = encode(&mut tape, &p, tokens)?;
    let tf = decode_teacher_forced(&mut tape, &p, &enc, tokens)?;
    let loss = tf.loss(&mut tape)?;
    let (correct, total) = tf.accuracy_counts(&tape);
    let grads = if train {
        tape.backward(loss)?;
        bound.grads(&tape)
    } else {
        Default::default()
    };
    Ok(ExampleOut {
        loss: tape.value(loss).item(),
        grads,
        stats: vec![correct as f64, total as f64],
    })
}

/// Teacher-forced token accuracy (EOS included) over `sentences`.
pub fn token_accuracy(ckpt: &ModelCheckpoint, sentences: &[Vec<usize>], threads: usize) -> Result<f64> {
    if sentences.is_empty() {
        return Err(Error::Empty("no sentences to evaluate".into()));
    }
    let pool = thread_pool(threads)?;
    let counts: Vec<(f64, f64)> = pool.install(|| {
        sentences
            .par_iter()
            .map(|s| reconstruction_example(ckpt, s, false).map(|o| (o.stats[0], o.stats[1])))
            .collect::<Result<_>>()
    })?;
    let (c, t) = counts.iter().fold((0.0, 0.0), |(a, b), (c, t)| (a + c, b + t));
    Ok(c / t)
}

fn check_corpus(corpus: &[Vec<usize>], cfg: &AutoencoderConfig) -> Result<()> {
    if let Some(s) = corpus.iter().find(|s| s.is_empty() || s.len() > cfg.max_len) {
        return Err(Error::Contract(format!(
            "corpus sentence of length {} outside 1..={}",
            s.len(),
            cfg.max_len
        )));
    }
    Ok(())
}

fn reconstruction_epoch(
    trainer: &mut Trainer,
    ckpt: &mut ModelCheckpoint,
    train: &[Vec<usize>],
    cfg: &TrainingConfig,
    epoch: usize,
) -> Result<EpochAccumulator> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut shuffle_rng(cfg.seed, epoch));
    let mut acc = EpochAccumulator::default();
    for batch in batches(&order, cfg.batch_size) {
        let out = trainer.step(ckpt, batch, |c, i| reconstruction_example(c, &train[i], true))?;
        acc.add(batch.len(), &out);
    }
    Ok(acc)
}

fn record(epoch: usize, acc: &EpochAccumulator, heldout: f64) -> EpochRecord {
    EpochRecord {
        epoch,
        loss: acc.mean_loss(),
        accuracy: acc.stat(0) / acc.stat(1).max(1.0),
        heldout_accuracy: Some(heldout),
        classifier_ce: None,
        cosine_term: None,
        grad_norm: acc.mean_grad_norm(),
    }
}

/// Splits off a held-out slice with a seeded permutation. Returns
/// `(train, heldout)`; corpora of fewer than two sentences get no held-out slice.
pub fn heldout_split(corpus: &[Vec<usize>], fraction: f64, seed: u64) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(HELDOUT_STREAM);
    order.shuffle(&mut rng);
    let n_held = if corpus.len() < 2 {
        0
    } else {
        ((corpus.len() as f64 * fraction).round() as usize).min(corpus.len() - 1)
    };
    let (held, train) = order.split_at(n_held);
    (
        train.iter().map(|&i| corpus[i].clone()).collect(),
        held.iter().map(|&i| corpus[i].clone()).collect(),
    )
}

const HELDOUT_STREAM: u64 = 1 << 62;

fn stamp(ckpt: &mut ModelCheckpoint, cfg: &TrainingConfig, log: &TrainingLog) {
    ckpt.stamp_fingerprint(cfg);
    ckpt.meta.insert("phase".into(), cfg.phase.name().into());
    ckpt.meta.insert("epochs_run".into(), log.epochs.len().into());
    if let Some(acc) = log.final_heldout() {
        ckpt.meta.insert(format!("{}_accuracy", cfg.phase.name()), acc.into());
    }
    ckpt.meta.insert(
        format!("{}_config", cfg.phase.name()),
        serde_json::to_value(cfg).expect("config serializes"),
    );
}

/// Trains a fresh autoencoder on `corpus` with teacher forcing until the
/// held-out token accuracy reaches `cfg.target_accuracy` or the epochs run out.
///
/// Returns the checkpoint whatever the outcome; `log.gate_met` tells whether
/// the gate was reached. [`pretrain_autoencoder`] turns a missed gate into an error.
pub fn pretrain_autoencoder_unchecked(
    corpus: &[Vec<usize>],
    ae_cfg: &AutoencoderConfig,
    vocab_hash: &str,
    embeddings: Option<&EmbeddingTable>,
    cfg: &TrainingConfig,
) -> Result<(ModelCheckpoint, TrainingLog)> {
    cfg.validate()?;
    cfg.expect_phase(&[Phase::Pretrain])?;
    if corpus.is_empty() {
        return Err(Error::Empty("pretraining corpus is empty".into()));
    }
    check_corpus(corpus, ae_cfg)?;
    let mut ckpt = init_autoencoder(ae_cfg, vocab_hash, embeddings, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let mut log = TrainingLog::new(Phase::Pretrain);
    let mut trainer = Trainer::new(cfg)?;
    trainer.prepare(&mut ckpt);
    let (train, held) = heldout_split(corpus, cfg.heldout_fraction, cfg.seed);
    let held = if held.is_empty() { train.clone() } else { held };
    for epoch in 0..cfg.epochs {
        let acc = reconstruction_epoch(&mut trainer, &mut ckpt, &train, cfg, epoch)?;
        let heldout = token_accuracy(&ckpt, &held, cfg.threads)?;
        log::info!("pretrain epoch {epoch}: loss {:.4}, held-out accuracy {heldout:.4}", acc.mean_loss());
        log.epochs.push(record(epoch, &acc, heldout));
        if heldout >= cfg.target_accuracy {
            log.gate_met = true;
            break;
        }
    }
    stamp(&mut ckpt, cfg, &log);
    ckpt.meta.insert("gate_met".into(), log.gate_met.into());
    Ok((ckpt, log))
}

/// Like [`pretrain_autoencoder_unchecked`], but failing to reach the accuracy
/// gate within `cfg.epochs` is an error carrying the held-out curve. Zero
/// epochs returns the initialization.
pub fn pretrain_autoencoder(
    corpus: &[Vec<usize>],
    ae_cfg: &AutoencoderConfig,
    vocab_hash: &str,
    embeddings: Option<&EmbeddingTable>,
    cfg: &TrainingConfig,
) -> Result<(ModelCheckpoint, TrainingLog)> {
    let (ckpt, log) = pretrain_autoencoder_unchecked(corpus, ae_cfg, vocab_hash, embeddings, cfg)?;
    if cfg.epochs > 0 && !log.gate_met {
        let curve = log.heldout_curve();
        return Err(Error::NotConverged {
            target: cfg.target_accuracy,
            best: curve.iter().copied().fold(0.0, f64::max),
            epochs: log.epochs.len(),
            curve,
        });
    }
    Ok((ckpt, log))
}

/// Continues reconstruction training on a task corpus, stopping as soon as
/// its token accuracy reaches `cfg.target_accuracy` (checked before every
/// epoch) or after `cfg.epochs` epochs. An empty corpus leaves the
/// checkpoint unchanged.
pub fn adapt_autoencoder(
    ckpt: &ModelCheckpoint,
    corpus: &[Vec<usize>],
    vocab_hash: &str,
    cfg: &TrainingConfig,
) -> Result<(ModelCheckpoint, TrainingLog)> {
    cfg.validate()?;
    cfg.expect_phase(&[Phase::Adapt])?;
    ckpt.check_vocab(vocab_hash)?;
    let mut log = TrainingLog::new(Phase::Adapt);
    if corpus.is_empty() {
        log::warn!("empty task corpus; autoencoder left unchanged");
        return Ok((ckpt.clone(), log));
    }
    let ae_cfg = ckpt.model.as_autoencoder()?;
    check_corpus(corpus, ae_cfg)?;
    let mut out = ckpt.clone();
    out.set_frozen_by(|_| false);
    let mut trainer = Trainer::new(cfg)?;
    trainer.prepare(&mut out);
    let mut current = token_accuracy(&out, corpus, cfg.threads)?;
    log.initial_accuracy = Some(current);
    for epoch in 0..cfg.epochs {
        if current >= cfg.target_accuracy {
            break;
        }
        let acc = reconstruction_epoch(&mut trainer, &mut out, corpus, cfg, epoch)?;
        current = token_accuracy(&out, corpus, cfg.threads)?;
        log::info!("adapt epoch {epoch}: loss {:.4}, task accuracy {current:.4}", acc.mean_loss());
        log.epochs.push(record(epoch, &acc, current));
    }
    log.gate_met = current >= cfg.target_accuracy;
    stamp(&mut out, cfg, &log);
    out.meta.insert("adapt_gate_met".into(), log.gate_met.into());
    Ok((out, log))
}

/// Greedy (noise-free, argmax) reconstruction of every sentence, capped at
/// `ceil(max_len_factor × length)` tokens. Output order matches input order.
pub fn generate_reconstructions(
    ae: &ModelCheckpoint,
    sentences: &[Vec<usize>],
    max_len_factor: f64,
    threads: usize,
) -> Result<Vec<Vec<usize>>> {
    let pool = thread_pool(threads)?;
    pool.install(|| {
        sentences
            .par_iter()
            .map(|s| greedy_decode(ae, s, ((s.len() as f64 * max_len_factor).ceil() as usize).max(1)))
            .collect()
    })
}
