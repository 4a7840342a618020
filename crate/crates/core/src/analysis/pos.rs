use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SPECIAL_TOKENS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosCategory {
    Noun,
    Dt,
    Verb,
    Adj,
    Prep,
    Punct,
    Unk,
    Other,
}

impl PosCategory {
    pub const ALL: [PosCategory; 8] = [
        PosCategory::Noun,
        PosCategory::Dt,
        PosCategory::Verb,
        PosCategory::Adj,
        PosCategory::Prep,
        PosCategory::Punct,
        PosCategory::Unk,
        PosCategory::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PosCategory::Noun => "NOUN",
            PosCategory::Dt => "DT",
            PosCategory::Verb => "VERB",
            PosCategory::Adj => "ADJ",
            PosCategory::Prep => "PREP",
            PosCategory::Punct => "PUNCT",
            PosCategory::Unk => "UNK",
            PosCategory::Other => "OTHER",
        }
    }
}

impl std::str::FromStr for PosCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Contract(format!("unknown POS category `{s}`")))
    }
}

/// Assigns one category per token of a sentence.
pub trait Tagger {
    fn tag(&self, tokens: &[String]) -> Vec<PosCategory>;
}

const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "some", "any", "every", "each", "no", "all", "both", "either",
    "neither", "my", "your", "his", "her", "its", "our", "their", "another", "such",
];

const PREPOSITIONS: &[&str] = &[
    "in", "on", "at", "of", "for", "with", "by", "from", "to", "about", "into", "onto", "over", "under", "after",
    "before", "between", "through", "during", "without", "within", "against", "among", "as", "than", "up", "down",
    "off", "near", "since", "until", "upon", "across", "behind", "beyond", "around", "toward", "towards", "via", "per",
    "despite", "throughout", "beneath", "above", "below", "along", "inside", "outside",
];

const OTHER_WORDS: &[&str] = &[
    "i", "you", "he", "she", "it", "we", "they", "me", "him", "us", "them", "myself", "itself", "who", "whom", "whose",
    "which", "what", "and", "or", "but", "so", "yet", "nor", "if", "because", "while", "although", "though", "unless",
    "not", "n't", "very", "too", "also", "just", "only", "even", "still", "never", "always", "often", "here", "there",
    "then", "now", "when", "where", "why", "how", "s", "t", "more", "most", "less", "least", "much", "many", "quite",
    "rather", "almost", "again", "ever", "yes", "oh",
];

const AUXILIARIES: &[&str] = &[
    "is", "are", "was", "were", "be", "been", "being", "am", "has", "have", "had", "having", "do", "does", "did",
    "will", "would", "can", "could", "should", "may", "might", "must", "shall",
];

const VERBS: &[&str] = &[
    "run", "runs", "ran", "go", "goes", "went", "gone", "make", "makes", "made", "take", "takes", "took", "taken",
    "see", "sees", "saw", "seen", "get", "gets", "got", "give", "gives", "gave", "given", "know", "knows", "knew",
    "known", "think", "thinks", "thought", "come", "comes", "came", "look", "looks", "want", "wants", "use", "uses",
    "find", "finds", "found", "tell", "tells", "told", "ask", "asks", "work", "works", "feel", "feels", "felt", "try",
    "tries", "leave", "leaves", "left", "call", "calls", "keep", "keeps", "kept", "let", "lets", "begin", "begins",
    "began", "seem", "seems", "help", "helps", "show", "shows", "showed", "shown", "hear", "hears", "heard", "play",
    "plays", "move", "moves", "live", "lives", "believe", "believes", "bring", "brings", "brought", "happen",
    "happens", "write", "writes", "wrote", "written", "sit", "sits", "sat", "stand", "stands", "stood", "lose",
    "loses", "lost", "pay", "pays", "paid", "meet", "meets", "met", "say", "says", "said", "love", "loves", "hate",
    "hates", "sleep", "sleeps", "slept", "eat", "eats", "ate", "eaten", "walk", "walks", "sing", "sings", "sang",
    "watch", "watches", "read", "reads", "fail", "fails", "become", "becomes", "became",
];

const ADJECTIVES: &[&str] = &[
    "good", "bad", "great", "new", "old", "big", "small", "long", "short", "high", "low", "young", "little", "large",
    "best", "worst", "better", "worse", "nice", "fine", "dull", "fun", "funny", "boring", "real", "true", "sure",
    "clear", "full", "easy", "hard", "strong", "weak", "smart", "dumb", "sad", "happy", "poor", "rich", "cheap",
    "awful", "terrible", "brilliant", "excellent", "wonderful", "horrible", "stupid", "lovely", "flat", "bright",
    "dark", "slow", "fast", "cold", "hot", "warm", "red", "black", "white", "blue", "green", "entire", "whole",
];

const ADJ_SUFFIXES: &[&str] = &["ful", "ous", "ive", "able", "ible", "less", "ish", "ical", "ic", "al"];
const VERB_SUFFIXES: &[&str] = &["ing", "ed", "ize", "ise", "ify"];

/// Closed-class word lists plus suffix heuristics; unknown content words
/// default to NOUN.
#[derive(Debug, Clone, Default)]
pub struct RuleTagger;

impl RuleTagger {
    pub fn tag_token(&self, token: &str) -> PosCategory {
        let t = token.to_lowercase();
        let t = t.as_str();
        if t == SPECIAL_TOKENS[crate::data::UNK] {
            return PosCategory::Unk;
        }
        if !t.is_empty() && t.chars().all(|c| !c.is_alphanumeric()) {
            return PosCategory::Punct;
        }
        if t.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
            return PosCategory::Other;
        }
        if DETERMINERS.contains(&t) {
            return PosCategory::Dt;
        }
        if PREPOSITIONS.contains(&t) {
            return PosCategory::Prep;
        }
        if OTHER_WORDS.contains(&t) {
            return PosCategory::Other;
        }
        if AUXILIARIES.contains(&t) || VERBS.contains(&t) {
            return PosCategory::Verb;
        }
        if ADJECTIVES.contains(&t) {
            return PosCategory::Adj;
        }
        let long = t.chars().count() > 4;
        if long && t.ends_with("ly") {
            return PosCategory::Other;
        }
        if long && VERB_SUFFIXES.iter().any(|s| t.ends_with(s)) {
            return PosCategory::Verb;
        }
        if long && ADJ_SUFFIXES.iter().any(|s| t.ends_with(s)) {
            return PosCategory::Adj;
        }
        PosCategory::Noun
    }
}

impl Tagger for RuleTagger {
    fn tag(&self, tokens: &[String]) -> Vec<PosCategory> {
        tokens.iter().map(|t| self.tag_token(t)).collect()
    }
}

/// Token → category table, typically exported from an external tagger.
/// Tokens missing from the table fall back to [`RuleTagger`].
#[derive(Debug, Clone, Default)]
pub struct TagLexicon {
    tags: HashMap<String, PosCategory>,
}

impl TagLexicon {
    pub fn new(tags: HashMap<String, PosCategory>) -> Self {
        TagLexicon { tags }
    }

    /// Reads `token<TAB>CATEGORY` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tags = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 {
                return Err(Error::format(path, i + 1, "expected `token<TAB>category`"));
            }
            let cat = cols[1]
                .trim()
                .parse()
                .map_err(|_| Error::format(path, i + 1, format!("unknown category `{}`", cols[1])))?;
            tags.insert(cols[0].to_string(), cat);
        }
        Ok(TagLexicon { tags })
    }
}

impl Tagger for TagLexicon {
    fn tag(&self, tokens: &[String]) -> Vec<PosCategory> {
        tokens
            .iter()
            .map(|t| self.tags.get(t).copied().unwrap_or_else(|| RuleTagger.tag_token(t)))
            .collect()
    }
}

/// Counts for one category and the relative change in percent, `None` when
/// the category never occurs in the originals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosDelta {
    pub original: usize,
    pub generated: usize,
    pub change: Option<f64>,
}

/// Corpus-wide `100 × (count_generated − count_original) / count_original`
/// per category.
pub fn pos_change_table(
    pairs: &[(Vec<String>, Vec<String>)],
    tagger: &dyn Tagger,
) -> Result<BTreeMap<PosCategory, PosDelta>> {
    if pairs.is_empty() {
        return Err(Error::Empty("no sentence pairs to compare".into()));
    }
    let mut orig = BTreeMap::new();
    let mut gen = BTreeMap::new();
    for (o, g) in pairs {
        for c in tagger.tag(o) {
            *orig.entry(c).or_insert(0usize) += 1;
        }
        for c in tagger.tag(g) {
            *gen.entry(c).or_insert(0usize) += 1;
        }
    }
    Ok(PosCategory::ALL
        .into_iter()
        .map(|c| {
            let o = orig.get(&c).copied().unwrap_or(0);
            let g = gen.get(&c).copied().unwrap_or(0);
            let change = (o > 0).then(|| 100.0 * (g as f64 - o as f64) / o as f64);
            (
                c,
                PosDelta {
                    original: o,
                    generated: g,
                    change,
                },
            )
        })
        .collect())
}
