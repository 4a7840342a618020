use std::collections::HashSet;
use std::hash::Hash;

use crate::checkpoint::ModelCheckpoint;
use crate::data::{Example, EOS};
use crate::error::{Error, Result};
use crate::pipeline::predict_labels;

/// Mean over pairs of `|set(original) ∩ set(generated)| / |set(original)|`,
/// in percent. Pairs with an empty original are skipped with a warning.
pub fn token_overlap<T: Eq + Hash>(pairs: &[(Vec<T>, Vec<T>)]) -> Result<f64> {
    let mut total = 0.0;
    let mut used = 0usize;
    for (i, (o, g)) in pairs.iter().enumerate() {
        let orig: HashSet<&T> = o.iter().collect();
        if orig.is_empty() {
            log::warn!("pair {i}: empty original sentence skipped");
            continue;
        }
        let gen: HashSet<&T> = g.iter().collect();
        total += orig.intersection(&gen).count() as f64 / orig.len() as f64;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Empty("no pairs with a non-empty original".into()));
    }
    Ok(100.0 * total / used as f64)
}

/// Percentage of examples the classifier assigns their (flipped) label.
/// `examples[i].first` holds generated text; an empty generation is read as
/// a lone EOS token.
pub fn fool_rate(clf: &ModelCheckpoint, examples: &[Example], threads: usize) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("no generated examples to score".into()));
    }
    let filled: Vec<Example> = examples
        .iter()
        .map(|ex| {
            let mut ex = ex.clone();
            if ex.first.is_empty() {
                ex.first.push(EOS);
            }
            ex
        })
        .collect();
    let preds = predict_labels(clf, &filled, threads)?;
    let hits = preds.iter().zip(&filled).filter(|(p, ex)| **p == ex.label).count();
    Ok(100.0 * hits as f64 / examples.len() as f64)
}
