use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::pos::{PosCategory, PosDelta};
use super::sentiment::{SentimentDelta, SentimentShift};
use super::terms::RankedTermList;
use crate::error::{Error, Result};

/// Marker written where a relative change has a zero denominator.
pub const UNDEFINED: &str = "n/a";

/// Rounds to 6 significant digits (non-finite values pass through).
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// One analysis result to place in a report, tagged with the run it
/// belongs to (for example the classifier variant).
#[derive(Debug, Clone)]
pub enum ReportComponent {
    Pos(String, BTreeMap<PosCategory, PosDelta>),
    Sentiment(String, SentimentShift),
    Terms(String, RankedTermList),
    Tau(String, f64),
    Overlap(String, f64),
    FoolRate(String, f64),
}

/// Aggregated analysis results. Floats are stored rounded to 6 significant
/// digits so the canonical JSON round-trips exactly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub metadata: BTreeMap<String, Value>,
    /// Run → POS category → percent change (number or `"n/a"`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pos_delta: BTreeMap<String, BTreeMap<String, Value>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub sentiment: BTreeMap<String, SentimentShift>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub term_lists: BTreeMap<String, RankedTermList>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub kendall_tau: BTreeMap<String, f64>,
    /// Percent.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub token_overlap: BTreeMap<String, f64>,
    /// Percent.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fool_rate: BTreeMap<String, f64>,
}

fn round_delta(d: SentimentDelta) -> SentimentDelta {
    SentimentDelta {
        positive: round_sig6(d.positive),
        negative: round_sig6(d.negative),
        sentences: d.sentences,
    }
}

/// Assembles a report from its metadata and any number of components.
pub fn build_report(
    metadata: BTreeMap<String, Value>,
    components: impl IntoIterator<Item = ReportComponent>,
) -> AnalysisReport {
    let mut r = AnalysisReport {
        metadata,
        ..Default::default()
    };
    for c in components {
        r.add(c);
    }
    r
}

impl AnalysisReport {
    pub fn add(&mut self, component: ReportComponent) {
        match component {
            ReportComponent::Pos(name, table) => {
                let row = table
                    .into_iter()
                    .map(|(cat, d)| {
                        let v = match d.change {
                            Some(x) => Value::from(round_sig6(x)),
                            None => Value::from(UNDEFINED),
                        };
                        (cat.name().to_string(), v)
                    })
                    .collect();
                self.pos_delta.insert(name, row);
            }
            ReportComponent::Sentiment(name, s) => {
                let s = SentimentShift {
                    overall: round_delta(s.overall),
                    by_label: s.by_label.into_iter().map(|(k, d)| (k, round_delta(d))).collect(),
                };
                self.sentiment.insert(name, s);
            }
            ReportComponent::Terms(name, list) => {
                let terms = list.terms.into_iter().map(|(t, s)| (t, round_sig6(s))).collect();
                self.term_lists.insert(
                    name,
                    RankedTermList {
                        source: list.source,
                        terms,
                    },
                );
            }
            ReportComponent::Tau(name, v) => {
                self.kendall_tau.insert(name, round_sig6(v));
            }
            ReportComponent::Overlap(name, v) => {
                self.token_overlap.insert(name, round_sig6(v));
            }
            ReportComponent::FoolRate(name, v) => {
                self.fool_rate.insert(name, round_sig6(v));
            }
        }
    }

    /// Canonical JSON: keys sorted, floats at 6 significant digits, trailing newline.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("report serializes");
        let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    /// Plain-text tables for reading in a terminal.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "{k}: {v}");
        }
        if !self.pos_delta.is_empty() {
            let _ = writeln!(out, "\nPOS change (% vs original)");
            let runs: Vec<&String> = self.pos_delta.keys().collect();
            let _ = write!(out, "{:<8}", "");
            for r in &runs {
                let _ = write!(out, "{r:>12}");
            }
            out.push('\n');
            for cat in PosCategory::ALL {
                let _ = write!(out, "{:<8}", cat.name());
                for r in &runs {
                    let cell = match self.pos_delta[*r].get(cat.name()) {
                        Some(Value::Number(n)) => format!("{:+.2}", n.as_f64().unwrap_or(0.0)),
                        Some(v) => v.as_str().unwrap_or(UNDEFINED).to_string(),
                        None => UNDEFINED.to_string(),
                    };
                    let _ = write!(out, "{cell:>12}");
                }
                out.push('\n');
            }
        }
        for (name, s) in &self.sentiment {
            let _ = writeln!(out, "\nSentiment shift ({name}, points)");
            let _ = writeln!(out, "{:<12}{:>10}{:>10}{:>8}", "label", "pos", "neg", "n");
            let mut row = |label: &str, d: &SentimentDelta| {
                let _ = writeln!(out, "{label:<12}{:>+10.2}{:>+10.2}{:>8}", d.positive, d.negative, d.sentences);
            };
            row("all", &s.overall);
            for (l, d) in &s.by_label {
                row(l, d);
            }
        }
        for (name, list) in &self.term_lists {
            let terms: Vec<String> = list.terms.iter().map(|(t, s)| format!("{t} ({s})")).collect();
            let _ = writeln!(out, "\nTop terms {name} [{:?}]: {}", list.source, terms.join(", "));
        }
        let mut scalars = |title: &str, map: &BTreeMap<String, f64>| {
            if !map.is_empty() {
                let _ = writeln!(out, "\n{title}");
                for (k, v) in map {
                    let _ = writeln!(out, "  {k:<24}{v:>10.4}");
                }
            }
        };
        scalars("Weighted Kendall tau", &self.kendall_tau);
        scalars("Token overlap (%)", &self.token_overlap);
        scalars("Fool rate (%)", &self.fool_rate);
        out
    }
}
