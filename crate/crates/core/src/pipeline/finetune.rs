use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::config::{Phase, TrainingConfig};
use super::log::{EpochAccumulator, EpochRecord, TrainingLog};
use super::optim::{batches, example_rng, shuffle_rng, ExampleOut, Trainer};
use crate::autodiff::{Tape, Tensor, Var};
use crate::checkpoint::ModelCheckpoint;
use crate::data::{Example, LabeledDataset, EOS, UNK};
use crate::error::{Error, Result};
use crate::models::{
    classify, decode_free_running, embed_ids, encode, AeParams, Bound, ClassifierInput, ClassifierParams,
    ClassifierVariant, DECODER_PREFIXES,
};
use crate::relax::Noise;

/// Whether an autoencoder tensor is updated during fine-tuning.
pub fn is_decoder_param(name: &str) -> bool {
    DECODER_PREFIXES.iter().any(|p| name.starts_with(p))
}

/// `1 − cos(mean(E[original]), mean(rows · E))` for an embedding table `E`
/// and generated token rows (one-hot or relaxed) of shape `[T, V]`.
pub fn similarity_penalty(tape: &mut Tape, emb: Var, original: &[usize], rows: Var) -> Result<Var> {
    let gen = tape.matmul(rows, emb)?;
    let gen_mean = tape.mean_rows(gen)?;
    let orig = tape.embedding_gather(emb, original)?;
    let orig_mean = tape.mean_rows(orig)?;
    let cos = tape.cosine_similarity(orig_mean, gen_mean)?;
    let neg = tape.scale(cos, -1.0);
    Ok(tape.add_scalar(neg, 1.0))
}

/// Loss pieces of one fine-tuning example.
#[derive(Debug, Clone)]
pub struct FinetuneStep {
    pub loss: f64,
    pub classifier_ce: f64,
    pub cosine_term: f64,
    /// The classifier's label for the generated text equals the target.
    pub agrees: bool,
    /// Emitted ids, EOS excluded.
    pub generated: Vec<usize>,
    pub grads: BTreeMap<String, Tensor>,
}

/// One stochastic fine-tuning pass over a single example: free-running
/// Gumbel/straight-through decode, word dropout on the emitted tokens, the
/// frozen classifier on the result, and (for `lambda > 0`) the `1 − cos`
/// term between mean classifier embeddings of original and generated text.
pub fn finetune_step<R: Rng>(
    ae: &ModelCheckpoint,
    clf: &ModelCheckpoint,
    ex: &Example,
    lambda: f64,
    cfg: &TrainingConfig,
    rng: &mut R,
) -> Result<FinetuneStep> {
    let ae_cfg = ae.model.as_autoencoder()?;
    let clf_cfg = clf.model.as_classifier()?;
    let mut tape = Tape::new();
    let ae_bound = Bound::new(&mut tape, ae, true);
    let clf_bound = Bound::new(&mut tape, clf, false);
    let p = AeParams::bind(&tape, &ae_bound, ae_cfg)?;
    let c = ClassifierParams::bind(&tape, &clf_bound, clf_cfg)?;

    let enc = encode(&mut tape, &p, &ex.first)?;
    let max_len = cfg.max_generated_len(ex.first.len());
    let samples = {
        let mut noise = Noise::Gumbel(rng);
        decode_free_running(&mut tape, &p, &enc, &mut noise, cfg.tau, max_len)?
    };
    let ends_with_eos = samples.last().map(|s| s.index == EOS).unwrap_or(false);
    let keep = if ends_with_eos && samples.len() > 1 { samples.len() - 1 } else { samples.len() };
    let rows: Vec<Var> = samples[..keep].iter().map(|s| s.s).collect();
    let generated: Vec<usize> = samples[..keep].iter().map(|s| s.index).filter(|&i| i != EOS).collect();

    let unk = tape.constant(Tensor::one_hot(ae_cfg.vocab_size, UNK));
    let dropped: Vec<Var> = rows
        .iter()
        .map(|&r| if rng.gen::<f64>() < cfg.word_dropout_rate { unk } else { r })
        .collect();
    let stacked = tape.stack_rows(&dropped)?;
    let x_hat = tape.matmul(stacked, c.emb)?;
    let input = match (&ex.second, clf_cfg.variant) {
        (Some(hyp), ClassifierVariant::Pair) => ClassifierInput::Pair(x_hat, embed_ids(&mut tape, &c, hyp)?),
        (None, ClassifierVariant::Pair) => {
            return Err(Error::Contract("pair classifier needs sentence-pair examples".into()))
        }
        (_, _) => ClassifierInput::Single(x_hat),
    };
    let logits = classify(&mut tape, &c, input)?;
    let ce = tape.cross_entropy_logits(logits, &[ex.label])?;
    let agrees = tape.value(logits).argmax() == ex.label;

    let (loss, cosine_term) = if lambda > 0.0 {
        let clean = tape.stack_rows(&rows)?;
        let term = similarity_penalty(&mut tape, c.emb, &ex.first, clean)?;
        let weighted = tape.scale(term, lambda);
        (tape.add(ce, weighted)?, tape.value(term).item())
    } else {
        (ce, 0.0)
    };
    tape.backward(loss)?;
    Ok(FinetuneStep {
        loss: tape.value(loss).item(),
        classifier_ce: tape.value(ce).item(),
        cosine_term,
        agrees,
        generated,
        grads: ae_bound.grads(&tape),
    })
}

fn check_inputs(ae: &ModelCheckpoint, clf: &ModelCheckpoint, data: &LabeledDataset) -> Result<()> {
    if let Some((name, _)) = clf.params().find(|(_, p)| !p.frozen) {
        return Err(Error::Contract(format!("classifier tensor `{name}` is not frozen")));
    }
    ae.check_vocab(&clf.vocab_hash)?;
    let ae_cfg = ae.model.as_autoencoder()?;
    let clf_cfg = clf.model.as_classifier()?;
    if ae_cfg.vocab_size != clf_cfg.vocab_size {
        return Err(Error::Dimension(format!(
            "autoencoder vocabulary {} vs classifier vocabulary {}",
            ae_cfg.vocab_size, clf_cfg.vocab_size
        )));
    }
    if let Some(ex) = data.examples.iter().find(|e| e.label >= clf_cfg.num_classes) {
        return Err(Error::Contract(format!("label {} outside the classifier's classes", ex.label)));
    }
    if (clf_cfg.variant == ClassifierVariant::Pair) != data.is_pair() {
        return Err(Error::Contract("classifier variant does not fit the dataset shape".into()));
    }
    Ok(())
}

fn audit(before: &BTreeMap<String, String>, after: &BTreeMap<String, String>) -> Result<()> {
    for (name, hash) in before {
        if after.get(name) != Some(hash) {
            return Err(Error::FrozenTensorChanged(name.clone()));
        }
    }
    Ok(())
}

fn run_finetune(
    ae: &ModelCheckpoint,
    clf: &ModelCheckpoint,
    data: &LabeledDataset,
    cfg: &TrainingConfig,
    lambda: f64,
) -> Result<(ModelCheckpoint, TrainingLog)> {
    cfg.validate()?;
    check_inputs(ae, clf, data)?;
    let mut out = ae.clone();
    out.set_frozen_by(|n| !is_decoder_param(n));
    let mut trainer = Trainer::new(cfg)?;
    trainer.prepare(&mut out);
    let frozen_before = out.frozen_hashes();
    let clf_before = clf.tensor_hashes();

    let mut log = TrainingLog::new(cfg.phase);
    if data.is_empty() {
        log::warn!("empty fine-tuning dataset; decoder left unchanged");
    }
    for epoch in 0..cfg.epochs {
        if data.is_empty() {
            break;
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut shuffle_rng(cfg.seed, epoch));
        let mut acc = EpochAccumulator::default();
        for batch in batches(&order, cfg.batch_size) {
            let out_batch = trainer.step(&mut out, batch, |a, i| {
                let mut rng = example_rng(cfg.seed, epoch, i);
                let step = finetune_step(a, clf, &data.examples[i], lambda, cfg, &mut rng)?;
                Ok(ExampleOut {
                    loss: step.loss,
                    grads: step.grads,
                    stats: vec![step.agrees as u8 as f64, step.classifier_ce, step.cosine_term],
                })
            })?;
            acc.add(batch.len(), &out_batch);
        }
        let n = acc.examples.max(1) as f64;
        let rec = EpochRecord {
            epoch,
            loss: acc.mean_loss(),
            accuracy: acc.stat(0) / n,
            heldout_accuracy: None,
            classifier_ce: Some(acc.stat(1) / n),
            cosine_term: (lambda > 0.0).then(|| acc.stat(2) / n),
            grad_norm: acc.mean_grad_norm(),
        };
        log::info!(
            "{} epoch {epoch}: loss {:.4}, classifier CE {:.4}, agreement {:.3}, grad norm {:.3e}",
            cfg.phase.name(),
            rec.loss,
            rec.classifier_ce.unwrap_or(0.0),
            rec.accuracy,
            rec.grad_norm
        );
        log.epochs.push(rec);
    }
    audit(&frozen_before, &out.frozen_hashes())?;
    audit(&clf_before, &clf.tensor_hashes())?;
    log.gate_met = true;

    out.stamp_fingerprint(&(cfg, &clf.fingerprint));
    out.meta.insert("phase".into(), cfg.phase.name().into());
    out.meta.insert("classifier_fingerprint".into(), clf.fingerprint.clone().into());
    out.meta.insert("frozen_audit".into(), "passed".into());
    out.meta.insert(format!("{}_config", cfg.phase.name()), serde_json::to_value(cfg)?);
    Ok((out, log))
}

/// Tunes the decoder so the frozen classifier assigns each example its
/// dataset label. Encoder, embeddings and classifier are left bit-identical
/// (audited); the classifier checkpoint must already be fully frozen.
pub fn finetune_decoder(
    ae: &ModelCheckpoint,
    clf: &ModelCheckpoint,
    data: &LabeledDataset,
    cfg: &TrainingConfig,
) -> Result<(ModelCheckpoint, TrainingLog)> {
    cfg.expect_phase(&[Phase::Finetune, Phase::FlipFinetune])?;
    run_finetune(ae, clf, data, cfg, 0.0)
}

/// Label-flip fine-tuning: as [`finetune_decoder`] on a flipped dataset, with
/// `cfg.cosine_loss_weight × (1 − cos)` added to keep generated text close to
/// the original. For sentence pairs only the first sentence is rewritten.
pub fn finetune_with_flip(
    ae: &ModelCheckpoint,
    clf: &ModelCheckpoint,
    flipped: &LabeledDataset,
    cfg: &TrainingConfig,
) -> Result<(ModelCheckpoint, TrainingLog)> {
    cfg.expect_phase(&[Phase::FlipFinetune])?;
    run_finetune(ae, clf, flipped, cfg, cfg.cosine_loss_weight)
}
