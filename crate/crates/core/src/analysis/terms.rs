use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing constant added to every word–class count for PMI.
pub const DEFAULT_PMI_SMOOTHING: f64 = 100.0;

/// Number of top terms of each list compared by the rank correlation.
pub const DEFAULT_TAU_TOP_K: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TermSource {
    Pmi,
    Sift,
}

/// Terms by descending score, ties broken lexicographically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTermList {
    pub source: TermSource,
    pub terms: Vec<(String, f64)>,
}

impl RankedTermList {
    pub fn new(source: TermSource, mut terms: Vec<(String, f64)>) -> Self {
        terms.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        RankedTermList { source, terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Zero-based position of `term`.
    pub fn rank_of(&self, term: &str) -> Option<usize> {
        self.terms.iter().position(|(t, _)| t == term)
    }

    pub fn score_of(&self, term: &str) -> Option<f64> {
        self.terms.iter().find(|(t, _)| t == term).map(|(_, s)| *s)
    }

    pub fn top(&self, k: usize) -> RankedTermList {
        RankedTermList {
            source: self.source,
            terms: self.terms.iter().take(k).cloned().collect(),
        }
    }
}

/// PMI between each word and `target`, `ln [p(w, c) / (p(w) p(c))]`, from
/// token-occurrence counts with `smoothing` added to every (word, class) cell
/// of the observed vocabulary; marginals come from the smoothed table. Only
/// words that occur in `target` at least once are ranked.
pub fn pmi_ranking<S: AsRef<str>>(
    docs: &[(Vec<S>, usize)],
    num_classes: usize,
    target: usize,
    smoothing: f64,
) -> Result<RankedTermList> {
    if num_classes < 2 {
        return Err(Error::DegenerateData("PMI needs at least two classes".into()));
    }
    if target >= num_classes {
        return Err(Error::UnknownClass(target.to_string()));
    }
    if !(smoothing >= 0.0) {
        return Err(Error::Contract(format!("smoothing must be non-negative, got {smoothing}")));
    }
    let mut counts: HashMap<&str, Vec<f64>> = HashMap::new();
    for (tokens, label) in docs {
        if *label >= num_classes {
            return Err(Error::UnknownClass(label.to_string()));
        }
        for t in tokens {
            counts.entry(t.as_ref()).or_insert_with(|| vec![0.0; num_classes])[*label] += 1.0;
        }
    }
    if counts.is_empty() {
        return Err(Error::Empty("no tokens to count".into()));
    }
    let mut class_totals = vec![0.0; num_classes];
    let mut word_totals: HashMap<&str, f64> = HashMap::new();
    let mut total = 0.0;
    let mut words: Vec<&str> = counts.keys().copied().collect();
    words.sort_unstable();
    for w in &words {
        let row = &counts[w];
        let mut wt = 0.0;
        for (c, n) in row.iter().enumerate() {
            let s = n + smoothing;
            class_totals[c] += s;
            wt += s;
        }
        word_totals.insert(w, wt);
        total += wt;
    }
    let terms = words
        .iter()
        .filter(|w| counts[*w][target] > 0.0)
        .map(|w| {
            let joint = counts[w][target] + smoothing;
            let pmi = (joint * total / (word_totals[w] * class_totals[target])).ln();
            (w.to_string(), pmi)
        })
        .collect();
    Ok(RankedTermList::new(TermSource::Pmi, terms))
}

/// Net frequency increase, `count(generated) − count(original)`, for every
/// word seen on either side.
pub fn sift_term_ranking<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<S>)]) -> Result<RankedTermList> {
    if pairs.is_empty() {
        return Err(Error::Empty("no sentence pairs to compare".into()));
    }
    let mut score: BTreeMap<&str, i64> = BTreeMap::new();
    for (o, g) in pairs {
        for t in o {
            *score.entry(t.as_ref()).or_default() -= 1;
        }
        for t in g {
            *score.entry(t.as_ref()).or_default() += 1;
        }
    }
    Ok(RankedTermList::new(
        TermSource::Sift,
        score.into_iter().map(|(w, s)| (w.to_string(), s as f64)).collect(),
    ))
}

/// Weighted Kendall's tau between two rankings of the same `n` items given
/// as zero-based positions (`a[i]`, `b[i]` are item `i`'s ranks, each a
/// permutation of `0..n`). Pairs are weighted `1/(a_i + 1) + 1/(a_j + 1)`.
/// Runs in `O(n log n)`.
pub fn weighted_tau_from_ranks(a: &[usize], b: &[usize]) -> Result<f64> {
    let n = a.len();
    if n < 2 {
        return Err(Error::DegenerateData(format!("rank correlation needs at least 2 items, got {n}")));
    }
    if b.len() != n || !is_permutation(a) || !is_permutation(b) {
        return Err(Error::Contract("ranks must be two permutations of 0..n".into()));
    }
    // Visit items by position in `a`; for each, look at the earlier ones.
    let mut by_a = vec![0usize; n];
    for (item, &r) in a.iter().enumerate() {
        by_a[r] = item;
    }
    let mut count = Fenwick::new(n);
    let mut weight = Fenwick::new(n);
    let mut numer = 0.0;
    let mut prefix_u = 0.0;
    for (j, &item) in by_a.iter().enumerate() {
        let u = 1.0 / (j as f64 + 1.0);
        let rb = b[item];
        let below = count.prefix(rb);
        let below_u = weight.prefix(rb);
        // Earlier items ranked above in `b` are concordant, the rest discordant.
        numer += (2.0 * below_u - prefix_u) + u * (2.0 * below - j as f64);
        count.add(rb, 1.0);
        weight.add(rb, u);
        prefix_u += u;
    }
    let denom = (n as f64 - 1.0) * prefix_u;
    Ok((numer / denom).clamp(-1.0, 1.0))
}

fn is_permutation(r: &[usize]) -> bool {
    let mut seen = vec![false; r.len()];
    r.iter().all(|&x| x < r.len() && !std::mem::replace(&mut seen[x], true))
}

/// Weighted Kendall's tau between two term lists, over the terms shared by
/// the top `top_k` of both. Weights follow positions in `a`.
pub fn weighted_kendall_tau(a: &RankedTermList, b: &RankedTermList, top_k: usize) -> Result<f64> {
    let top_b: HashMap<&str, usize> = b.terms.iter().take(top_k).enumerate().map(|(i, (t, _))| (t.as_str(), i)).collect();
    let shared: Vec<(&str, usize)> = a
        .terms
        .iter()
        .take(top_k)
        .filter_map(|(t, _)| top_b.get(t.as_str()).map(|&rb| (t.as_str(), rb)))
        .collect();
    if shared.len() < 2 {
        return Err(Error::DegenerateData(format!(
            "only {} term(s) shared by the top {top_k} of both lists",
            shared.len()
        )));
    }
    let ra: Vec<usize> = (0..shared.len()).collect();
    let mut order: Vec<usize> = (0..shared.len()).collect();
    order.sort_by_key(|&i| shared[i].1);
    let mut rb = vec![0; shared.len()];
    for (pos, &i) in order.iter().enumerate() {
        rb[i] = pos;
    }
    weighted_tau_from_ranks(&ra, &rb)
}

/// Prefix sums over positions `0..n`.
struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { tree: vec![0.0; n + 1] }
    }

    fn add(&mut self, i: usize, v: f64) {
        let mut i = i + 1;
        while i < self.tree.len() {
            self.tree[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over positions `< i`.
    fn prefix(&self, i: usize) -> f64 {
        let mut i = i;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}
