//! Planted-artifact corpora.
//!
//! Every class owns a handful of *signal* words (one or more appear in each of
//! its sentences) and a few *artifact* words that are injected with a high
//! in-class and low cross-class probability. The rest of each sentence is
//! drawn uniformly from a shared filler pool.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::TextExample;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    /// Distinct word types, artifacts and signal words included.
    pub vocab_size: usize,
    pub num_examples: usize,
    pub num_classes: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub artifacts_per_class: usize,
    pub artifact_in_class_prob: f64,
    pub artifact_cross_class_prob: f64,
    pub signal_words_per_class: usize,
    pub signal_tokens_per_sentence: usize,
    pub dev_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// 200 word types, 2,000 sentences of at most 12 tokens, seed 7.
    fn default() -> Self {
        SyntheticSpec {
            vocab_size: 200,
            num_examples: 2000,
            num_classes: 2,
            min_len: 4,
            max_len: 12,
            artifacts_per_class: 1,
            artifact_in_class_prob: 0.9,
            artifact_cross_class_prob: 0.05,
            signal_words_per_class: 12,
            signal_tokens_per_sentence: 1,
            dev_fraction: 0.1,
            test_fraction: 0.1,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    fn planted_per_sentence(&self) -> usize {
        self.signal_tokens_per_sentence + self.num_classes * self.artifacts_per_class
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Contract(m));
        for p in [self.artifact_in_class_prob, self.artifact_cross_class_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        if self.num_classes < 2 {
            return bad("need at least two classes".into());
        }
        let reserved = self.num_classes * (self.artifacts_per_class + self.signal_words_per_class);
        if reserved >= self.vocab_size {
            return bad(format!("{reserved} artifact/signal words do not fit in {} types", self.vocab_size));
        }
        if self.signal_tokens_per_sentence > 0 && self.signal_words_per_class == 0 {
            return bad("signal tokens requested without signal words".into());
        }
        if self.min_len == 0 || self.min_len + self.planted_per_sentence() > self.max_len {
            return bad(format!(
                "lengths [{}, {}] leave no room for {} planted tokens",
                self.min_len,
                self.max_len,
                self.planted_per_sentence()
            ));
        }
        if self.dev_fraction < 0.0 || self.test_fraction < 0.0 || self.dev_fraction + self.test_fraction >= 1.0 {
            return bad("split fractions must be non-negative and sum below 1".into());
        }
        if self.num_examples == 0 {
            return bad("num_examples must be positive".into());
        }
        Ok(())
    }
}

/// Generated splits plus the ground truth that was planted.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub class_names: Vec<String>,
    pub train: Vec<TextExample>,
    pub dev: Vec<TextExample>,
    pub test: Vec<TextExample>,
    /// Class name → artifact tokens.
    pub manifest: BTreeMap<String, Vec<String>>,
    /// Class name → genuine class-indicative words.
    pub signal_words: BTreeMap<String, Vec<String>>,
}

impl SyntheticData {
    pub fn all(&self) -> impl Iterator<Item = &TextExample> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }

    pub fn artifacts_of(&self, class: usize) -> &[String] {
        &self.manifest[&self.class_names[class]]
    }
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Deterministic pronounceable pseudo-word for an index.
pub fn pseudo_word(mut index: usize) -> String {
    let syllables = ONSETS.len() * VOWELS.len();
    let mut word = String::new();
    loop {
        let s = index % syllables;
        word.push_str(ONSETS[s / VOWELS.len()]);
        word.push_str(VOWELS[s % VOWELS.len()]);
        index /= syllables;
        if index == 0 && word.len() >= 4 {
            break;
        }
    }
    word
}

pub fn class_name(c: usize) -> String {
    format!("c{c}")
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let words: Vec<String> = (0..spec.vocab_size).map(pseudo_word).collect();
    let mut pool = words.clone();
    pool.shuffle(&mut rng);
    let mut take = |n: usize| pool.drain(..n).collect::<Vec<_>>();
    let artifacts: Vec<Vec<String>> = (0..spec.num_classes).map(|_| take(spec.artifacts_per_class)).collect();
    let signals: Vec<Vec<String>> = (0..spec.num_classes).map(|_| take(spec.signal_words_per_class)).collect();
    let filler = pool;

    let mut labels: Vec<usize> = (0..spec.num_examples).map(|i| i % spec.num_classes).collect();
    labels.shuffle(&mut rng);

    let max_base = spec.max_len - spec.planted_per_sentence();
    let examples: Vec<TextExample> = labels
        .into_iter()
        .map(|label| {
            let len = rng.gen_range(spec.min_len..=max_base);
            let mut tokens: Vec<String> = (0..len).map(|_| filler[rng.gen_range(0..filler.len())].clone()).collect();
            let mut insert = |tok: &String, rng: &mut ChaCha8Rng| {
                let at = rng.gen_range(0..=tokens.len());
                tokens.insert(at, tok.clone());
            };
            for _ in 0..spec.signal_tokens_per_sentence {
                let w = &signals[label][rng.gen_range(0..signals[label].len())];
                insert(w, &mut rng);
            }
            for (c, arts) in artifacts.iter().enumerate() {
                let p = if c == label {
                    spec.artifact_in_class_prob
                } else {
                    spec.artifact_cross_class_prob
                };
                for a in arts {
                    if rng.gen_bool(p) {
                        insert(a, &mut rng);
                    }
                }
            }
            TextExample {
                label,
                first: tokens,
                second: None,
            }
        })
        .collect();

    let n_test = (spec.num_examples as f64 * spec.test_fraction).round() as usize;
    let n_dev = (spec.num_examples as f64 * spec.dev_fraction).round() as usize;
    let n_train = spec.num_examples - n_test - n_dev;
    let mut it = examples.into_iter();
    let train = it.by_ref().take(n_train).collect();
    let dev = it.by_ref().take(n_dev).collect();
    let test = it.collect();

    let class_names: Vec<String> = (0..spec.num_classes).map(class_name).collect();
    let manifest = class_names.iter().cloned().zip(artifacts).collect();
    let signal_words = class_names.iter().cloned().zip(signals).collect();
    Ok(SyntheticData {
        class_names,
        train,
        dev,
        test,
        manifest,
        signal_words,
    })
}
