use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Phase, TrainingConfig};
use super::log::{EpochAccumulator, EpochRecord, TrainingLog};
use super::optim::{batches, example_rng, shuffle_rng, thread_pool, ExampleOut, Trainer};
use crate::autodiff::Tape;
use crate::checkpoint::ModelCheckpoint;
use crate::data::{EmbeddingTable, Example, LabeledDataset};
use crate::error::{Error, Result};
use crate::models::{
    classify, embed_ids, init_classifier, predict, word_dropout_ids, Bound, ClassifierConfig, ClassifierInput,
    ClassifierParams, ClassifierVariant,
};

fn classifier_example(ckpt: &ModelCheckpoint, ex: &Example, dropout: Option<(f64, &mut ChaCha8Rng)>) -> Result<ExampleOut> {
    let cfg = ckpt.model.as_classifier()?;
    let (first, second) = match dropout {
        Some((rate, rng)) => (
            word_dropout_ids(&ex.first, rate, rng),
            ex.second.as_ref().map(|s| word_dropout_ids(s, rate, rng)),
        ),
        None => (ex.first.clone(), ex.second.clone()),
    };
    let mut tape = Tape::new();
    let bound = Bound::new(&mut tape, ckpt, true);
    let p = ClassifierParams::bind(&tape, &bound, cfg)?;
    let a = embed_ids(&mut tape, &p, &first)?;
    let input = match &second {
        Some(s) => ClassifierInput::Pair(a, embed_ids(&mut tape, &p, s)?),
        None => ClassifierInput::Single(a),
    };
    let logits = classify(&mut tape, &p, input)?;
    let loss = tape.cross_entropy_logits(logits, &[ex.label])?;
    let correct = (tape.value(logits).argmax() == ex.label) as usize as f64;
    tape.backward(loss)?;
    Ok(ExampleOut {
        loss: tape.value(loss).item(),
        grads: bound.grads(&tape),
        stats: vec![correct],
    })
}

/// Predicted label for every example, in order.
pub fn predict_labels(ckpt: &ModelCheckpoint, examples: &[Example], threads: usize) -> Result<Vec<usize>> {
    let pool = thread_pool(threads)?;
    pool.install(|| {
        examples
            .par_iter()
            .map(|ex| {
                let probs = predict(ckpt, &ex.first, ex.second.as_deref())?;
                Ok(crate::autodiff::Tensor::vector(probs).argmax())
            })
            .collect()
    })
}

/// Fraction of examples whose predicted label equals the gold label.
pub fn classifier_accuracy(ckpt: &ModelCheckpoint, data: &LabeledDataset, threads: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("no examples to evaluate".into()));
    }
    let preds = predict_labels(ckpt, &data.examples, threads)?;
    let hits = preds.iter().zip(&data.examples).filter(|(p, ex)| **p == ex.label).count();
    Ok(hits as f64 / data.len() as f64)
}

fn check_compatible(cfg: &ClassifierConfig, data: &LabeledDataset) -> Result<()> {
    if (cfg.variant == ClassifierVariant::Pair) != data.is_pair() {
        return Err(Error::Contract(format!(
            "variant `{}` does not fit a {} dataset",
            cfg.variant.name(),
            if data.is_pair() { "sentence-pair" } else { "single-sentence" }
        )));
    }
    if cfg.num_classes != data.num_classes() {
        return Err(Error::Contract(format!(
            "classifier has {} classes, dataset has {}",
            cfg.num_classes,
            data.num_classes()
        )));
    }
    Ok(())
}

/// Cross-entropy training on gold labels. The returned checkpoint is fully
/// frozen, ready to be tuned against. Held-out accuracy is measured on `dev`
/// when given, otherwise on the training set.
pub fn train_classifier(
    train: &LabeledDataset,
    dev: Option<&LabeledDataset>,
    clf_cfg: &ClassifierConfig,
    vocab_hash: &str,
    embeddings: Option<&EmbeddingTable>,
    cfg: &TrainingConfig,
) -> Result<(ModelCheckpoint, TrainingLog)> {
    cfg.validate()?;
    cfg.expect_phase(&[Phase::TrainClf])?;
    if train.class_counts().iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::DegenerateData("training data covers fewer than two classes".into()));
    }
    check_compatible(clf_cfg, train)?;
    if let Some(d) = dev {
        check_compatible(clf_cfg, d)?;
    }
    let mut ckpt = init_classifier(clf_cfg, vocab_hash, embeddings, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    let mut trainer = Trainer::new(cfg)?;
    trainer.prepare(&mut ckpt);
    let eval_set = dev.filter(|d| !d.is_empty()).unwrap_or(train);
    let dropout = match clf_cfg.variant {
        ClassifierVariant::Dan => clf_cfg.word_dropout,
        _ => 0.0,
    };
    let mut log = TrainingLog::new(Phase::TrainClf);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut shuffle_rng(cfg.seed, epoch));
        let mut acc = EpochAccumulator::default();
        for batch in batches(&order, cfg.batch_size) {
            let out = trainer.step(&mut ckpt, batch, |c, i| {
                let mut rng = example_rng(cfg.seed, epoch, i);
                let drop = (dropout > 0.0).then_some((dropout, &mut rng));
                classifier_example(c, &train.examples[i], drop)
            })?;
            acc.add(batch.len(), &out);
        }
        let heldout = classifier_accuracy(&ckpt, eval_set, cfg.threads)?;
        log::info!("train-clf epoch {epoch}: loss {:.4}, held-out accuracy {heldout:.4}", acc.mean_loss());
        log.epochs.push(EpochRecord {
            epoch,
            loss: acc.mean_loss(),
            accuracy: acc.stat(0) / acc.examples.max(1) as f64,
            heldout_accuracy: Some(heldout),
            classifier_ce: None,
            cosine_term: None,
            grad_norm: acc.mean_grad_norm(),
        });
    }
    if log.epochs.is_empty() {
        log.initial_accuracy = Some(classifier_accuracy(&ckpt, eval_set, cfg.threads)?);
    }
    ckpt.freeze_all();
    ckpt.stamp_fingerprint(cfg);
    ckpt.meta.insert("phase".into(), cfg.phase.name().into());
    ckpt.meta.insert("class_names".into(), train.class_names.clone().into());
    if let Some(a) = log.final_heldout() {
        ckpt.meta.insert("heldout_accuracy".into(), a.into());
    }
    ckpt.meta.insert("train_clf_config".into(), serde_json::to_value(cfg)?);
    Ok((ckpt, log))
}
