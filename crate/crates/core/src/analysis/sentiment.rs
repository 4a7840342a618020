use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentEntry {
    pub positive: f64,
    pub negative: f64,
    pub is_adjective: bool,
}

/// Token → positive/negative scores in `[0, 1]` plus an adjective flag.
#[derive(Debug, Clone, Default)]
pub struct SentimentLexicon {
    entries: HashMap<String, SentimentEntry>,
}

impl SentimentLexicon {
    pub fn new(entries: HashMap<String, SentimentEntry>) -> Result<Self> {
        for (t, e) in &entries {
            if !(0.0..=1.0).contains(&e.positive) || !(0.0..=1.0).contains(&e.negative) {
                return Err(Error::Contract(format!("scores for `{t}` outside [0, 1]")));
            }
        }
        Ok(SentimentLexicon { entries })
    }

    /// Reads `token<TAB>pos<TAB>neg<TAB>is_adj` lines; `is_adj` is
    /// `1`/`0` or `true`/`false`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::format(path, lineno, format!("expected 4 columns, found {}", cols.len())));
            }
            let score = |s: &str| -> Result<f64> {
                let v: f64 = s
                    .trim()
                    .parse()
                    .map_err(|_| Error::format(path, lineno, format!("bad score `{s}`")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::format(path, lineno, format!("score {v} outside [0, 1]")));
                }
                Ok(v)
            };
            let is_adjective = match cols[3].trim().to_ascii_lowercase().as_str() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(Error::format(path, lineno, format!("bad adjective flag `{other}`"))),
            };
            entries.insert(
                cols[0].to_string(),
                SentimentEntry {
                    positive: score(cols[1])?,
                    negative: score(cols[2])?,
                    is_adjective,
                },
            );
        }
        Ok(SentimentLexicon { entries })
    }

    pub fn get(&self, token: &str) -> Option<&SentimentEntry> {
        self.entries.get(token)
    }

    /// Summed `(positive, negative)` scores of the adjectives in a sentence.
    pub fn sentence_scores(&self, tokens: &[String]) -> (f64, f64) {
        tokens
            .iter()
            .filter_map(|t| self.entries.get(t))
            .filter(|e| e.is_adjective)
            .fold((0.0, 0.0), |(p, n), e| (p + e.positive, n + e.negative))
    }
}

/// Mean `(generated − original)` adjective sentiment, in points (× 100).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentDelta {
    pub positive: f64,
    pub negative: f64,
    pub sentences: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentShift {
    pub overall: SentimentDelta,
    /// Keyed by the gold label of the example the pair came from.
    pub by_label: BTreeMap<String, SentimentDelta>,
}

fn mean_delta(pairs: &[&(Vec<String>, Vec<String>)], lexicon: &SentimentLexicon) -> SentimentDelta {
    let (mut dp, mut dn) = (0.0, 0.0);
    for (o, g) in pairs {
        let (op, on) = lexicon.sentence_scores(o);
        let (gp, gn) = lexicon.sentence_scores(g);
        dp += gp - op;
        dn += gn - on;
    }
    let n = pairs.len().max(1) as f64;
    SentimentDelta {
        positive: 100.0 * dp / n,
        negative: 100.0 * dn / n,
        sentences: pairs.len(),
    }
}

/// Sentiment change over adjectives, overall and per label. `labels` gives
/// the label name of each pair.
pub fn sentiment_shift(
    pairs: &[(Vec<String>, Vec<String>)],
    labels: &[String],
    lexicon: &SentimentLexicon,
) -> Result<SentimentShift> {
    if pairs.is_empty() {
        return Err(Error::Empty("no sentence pairs to compare".into()));
    }
    if labels.len() != pairs.len() {
        return Err(Error::Dimension(format!("{} labels for {} pairs", labels.len(), pairs.len())));
    }
    let all: Vec<&(Vec<String>, Vec<String>)> = pairs.iter().collect();
    let mut groups: BTreeMap<&str, Vec<&(Vec<String>, Vec<String>)>> = BTreeMap::new();
    for (p, l) in pairs.iter().zip(labels) {
        groups.entry(l.as_str()).or_default().push(p);
    }
    Ok(SentimentShift {
        overall: mean_delta(&all, lexicon),
        by_label: groups
            .into_iter()
            .map(|(l, ps)| (l.to_string(), mean_delta(&ps, lexicon)))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn lex() -> SentimentLexicon {
        SentimentLexicon::new(HashMap::from([
            ("good".to_string(), SentimentEntry { positive: 0.8, negative: 0.0, is_adjective: true }),
            ("bad".to_string(), SentimentEntry { positive: 0.0, negative: 0.6, is_adjective: true }),
            ("love".to_string(), SentimentEntry { positive: 0.9, negative: 0.0, is_adjective: false }),
        ]))
        .unwrap()
    }

    #[test]
    fn doubling_an_adjective() {
        let pairs = vec![(toks("a good film"), toks("a good good film"))];
        let s = sentiment_shift(&pairs, &["pos".into()], &lex()).unwrap();
        assert!((s.overall.positive - 80.0).abs() < 1e-12);
        assert_eq!(s.overall.negative, 0.0);
    }

    #[test]
    fn identity_and_unknown_tokens_give_zero() {
        let pairs = vec![
            (toks("a good film"), toks("a good film")),
            (toks("bad bad plot"), toks("bad bad plot")),
            (toks("zzz"), toks("qqq love")),
        ];
        let s = sentiment_shift(&pairs, &["a".into(), "b".into(), "a".into()], &lex()).unwrap();
        assert_eq!((s.overall.positive, s.overall.negative), (0.0, 0.0));
        assert_eq!(s.by_label["a"].sentences, 2);
    }

    #[test]
    fn split_by_label() {
        let pairs = vec![(toks("good"), toks("bad")), (toks("bad"), toks("bad"))];
        let s = sentiment_shift(&pairs, &["pos".into(), "neg".into()], &lex()).unwrap();
        assert!((s.by_label["pos"].positive + 80.0).abs() < 1e-12);
        assert!((s.by_label["pos"].negative - 60.0).abs() < 1e-12);
        assert_eq!(s.by_label["neg"].positive, 0.0);
    }

    #[test]
    fn lexicon_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.tsv");
        std::fs::write(&p, "good\t0.8\t0\t1\nrun\t0.1\t0.2\tfalse\n").unwrap();
        let l = SentimentLexicon::load(&p).unwrap();
        assert!(l.get("good").unwrap().is_adjective);
        assert!(!l.get("run").unwrap().is_adjective);
        std::fs::write(&p, "good\t1.8\t0\t1\n").unwrap();
        assert!(matches!(SentimentLexicon::load(&p), Err(Error::Format { line: 1, .. })));
        assert!(matches!(SentimentLexicon::load(dir.path().join("missing")), Err(Error::Io { .. })));
    }
}
