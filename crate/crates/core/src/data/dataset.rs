use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::vocab::Vocabulary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

/// One tokenized example before id mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct TextExample {
    pub label: usize,
    pub first: Vec<String>,
    pub second: Option<Vec<String>>,
}

/// Id-mapped example: a sentence, or a sentence pair, with its class.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Example {
    pub label: usize,
    pub first: Vec<usize>,
    pub second: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub examples: Vec<Example>,
    pub class_names: Vec<String>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn from_text(examples: &[TextExample], class_names: Vec<String>, vocab: &Vocabulary, split: Split) -> Result<Self> {
        let examples = examples
            .iter()
            .map(|e| {
                if e.label >= class_names.len() {
                    return Err(Error::Index(format!("label {} of {} classes", e.label, class_names.len())));
                }
                if e.first.is_empty() || e.second.as_ref().is_some_and(Vec::is_empty) {
                    return Err(Error::Empty("example with no tokens".into()));
                }
                Ok(Example {
                    label: e.label,
                    first: vocab.encode(&e.first),
                    second: e.second.as_ref().map(|s| vocab.encode(s)),
                })
            })
            .collect::<Result<_>>()?;
        Ok(LabeledDataset {
            examples,
            class_names,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn is_pair(&self) -> bool {
        self.examples.first().is_some_and(|e| e.second.is_some())
    }

    pub fn class_id(&self, name: &str) -> Result<usize> {
        self.class_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }

    /// Every sentence as an independent line; pairs contribute both sides.
    pub fn sentences(&self) -> Vec<Vec<usize>> {
        self.examples
            .iter()
            .flat_map(|e| std::iter::once(e.first.clone()).chain(e.second.clone()))
            .collect()
    }

    /// Keeps only examples labelled `from`, relabelled as `to`.
    pub fn flip_labels(&self, from: usize, to: usize) -> Result<Self> {
        if from == to {
            return Err(Error::Contract("flip source and target class are the same".into()));
        }
        for c in [from, to] {
            if c >= self.num_classes() {
                return Err(Error::UnknownClass(c.to_string()));
            }
        }
        let examples: Vec<Example> = self
            .examples
            .iter()
            .filter(|e| e.label == from)
            .map(|e| Example { label: to, ..e.clone() })
            .collect();
        if examples.is_empty() {
            warn!("no examples of class `{}` to flip", self.class_names[from]);
        }
        Ok(LabeledDataset {
            examples,
            class_names: self.class_names.clone(),
            split: self.split,
        })
    }

    pub fn to_tsv(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for e in &self.examples {
            let _ = write!(out, "{}\t{}", self.class_names[e.label], vocab.decode(&e.first).join(" "));
            if let Some(s) = &e.second {
                let _ = write!(out, "\t{}", vocab.decode(s).join(" "));
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv(vocab)).map_err(|e| Error::io(path, e))
    }
}

/// Tokenized TSV rows and the label table in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct TextDataset {
    pub examples: Vec<TextExample>,
    pub class_names: Vec<String>,
}

/// Parses `label<TAB>text` or `label<TAB>text1<TAB>text2` rows.
///
/// With `known_labels`, rows must use one of those labels and the table keeps
/// their order; otherwise labels are numbered as first seen.
pub fn read_text_dataset(path: impl AsRef<Path>, known_labels: Option<&[String]>) -> Result<TextDataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut class_names: Vec<String> = known_labels.map(<[String]>::to_vec).unwrap_or_default();
    let mut columns = None;
    let mut examples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        match (columns, cols.len()) {
            (_, n) if !(2..=3).contains(&n) => {
                return Err(Error::format(path, lineno, format!("expected 2 or 3 columns, got {n}")))
            }
            (None, n) => columns = Some(n),
            (Some(c), n) if c != n => {
                return Err(Error::format(path, lineno, format!("ragged row: {n} columns, expected {c}")))
            }
            _ => {}
        }
        let label_name = cols[0].trim();
        let label = match class_names.iter().position(|c| c == label_name) {
            Some(l) => l,
            None if known_labels.is_some() => {
                return Err(Error::format(path, lineno, format!("unseen label `{label_name}`")))
            }
            None => {
                class_names.push(label_name.to_string());
                class_names.len() - 1
            }
        };
        let first = tokenize(cols[1]);
        let second = cols.get(2).map(|t| tokenize(t));
        if first.is_empty() || second.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::format(path, lineno, "empty text after tokenization"));
        }
        examples.push(TextExample { label, first, second });
    }
    Ok(TextDataset { examples, class_names })
}

pub fn load_dataset(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    known_labels: Option<&[String]>,
    split: Split,
) -> Result<LabeledDataset> {
    let raw = read_text_dataset(path, known_labels)?;
    LabeledDataset::from_text(&raw.examples, raw.class_names, vocab, split)
}

/// One tokenized sentence per non-empty line.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(tokenize).filter(|t| !t.is_empty()).collect())
}

/// Whitespace-split lines, keeping empty lines so two files stay aligned.
pub fn read_aligned_lines(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect())
}

pub fn write_lines(path: impl AsRef<Path>, lines: &[Vec<String>]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for l in lines {
        text.push_str(&l.join(" "));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
