//! Comparisons between original and generated text, term rankings and the
//! report that collects them.
//!
//! Every function here is pure: the same inputs give bit-identical outputs.

mod metrics;
mod pos;
mod report;
mod sentiment;
mod terms;

pub use metrics::{fool_rate, token_overlap};
pub use pos::{pos_change_table, PosCategory, PosDelta, RuleTagger, TagLexicon, Tagger};
pub use report::{build_report, round_sig6, AnalysisReport, ReportComponent, UNDEFINED};
pub use sentiment::{sentiment_shift, SentimentDelta, SentimentEntry, SentimentLexicon, SentimentShift};
pub use terms::{
    pmi_ranking, sift_term_ranking, weighted_kendall_tau, weighted_tau_from_ranks, RankedTermList, TermSource,
    DEFAULT_PMI_SMOOTHING, DEFAULT_TAU_TOP_K,
};
