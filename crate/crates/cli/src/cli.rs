use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::options::{AdaptOpts, AnalyzeOpts, FinetuneOpts, PretrainOpts, SynthOpts, TrainClfOpts};

/// Fine-tune a sequence autoencoder's decoder against a frozen classifier
/// and report what the classifier responds to.
#[derive(Debug, Clone, Parser)]
#[command(name = "sift", version)]
pub struct Cli {
    /// Random seed [default: 7]
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; results are identical for any value [default: 1]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Stored parameter precision, f32 or f64 [default: f64]
    #[arg(long, global = true)]
    pub precision: Option<String>,

    /// TOML file with defaults for the flags of every command
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory [default: sift-out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Generate a labelled corpus with planted artifact tokens
    Synth(SynthArgs),
    /// Train an autoencoder on a plain-text corpus
    Pretrain(PretrainArgs),
    /// Continue autoencoder training on a task corpus
    Adapt(AdaptArgs),
    /// Train a classifier on a labelled TSV dataset
    TrainClf(TrainClfArgs),
    /// Tune the decoder against a frozen classifier, optionally flipping labels
    Finetune(FinetuneArgs),
    /// Compare original and generated text and write a report
    Analyze(AnalyzeArgs),
    /// Rerun a command from its run.json and check the outputs match
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Pretrain(_) => "pretrain",
            Command::Adapt(_) => "adapt",
            Command::TrainClf(_) => "train-clf",
            Command::Finetune(_) => "finetune",
            Command::Analyze(_) => "analyze",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub opts: SynthOpts,
}

#[derive(Debug, Clone, Args)]
pub struct PretrainArgs {
    /// One sentence per line
    #[arg(long)]
    pub corpus: PathBuf,
    /// Vocabulary file; built from the corpus and written out when absent
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Word vectors, `token v1 ... vd` per line
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Save the checkpoint even if the accuracy gate is missed
    #[arg(long)]
    pub allow_unconverged: bool,
    #[command(flatten)]
    pub opts: PretrainOpts,
}

#[derive(Debug, Clone, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub ae: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Task sentences, one per line
    #[arg(long, required_unless_present = "dataset", conflicts_with = "dataset")]
    pub corpus: Option<PathBuf>,
    /// Task dataset (TSV); both sides of pairs are used
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Accept an autoencoder that missed its pretraining gate
    #[arg(long)]
    pub allow_ungated: bool,
    #[command(flatten)]
    pub opts: AdaptOpts,
}

#[derive(Debug, Clone, Args)]
pub struct TrainClfArgs {
    /// Training TSV: `label<TAB>text` or `label<TAB>text<TAB>text`
    #[arg(long)]
    pub train: PathBuf,
    /// Held-out TSV with the same labels
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub opts: TrainClfOpts,
}

#[derive(Debug, Clone, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub ae: PathBuf,
    #[arg(long)]
    pub clf: PathBuf,
    /// Training TSV for the decoder
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Relabel class FROM as TO and train towards TO
    #[arg(long, value_name = "FROM:TO")]
    pub flip: Option<String>,
    /// TSV to generate from after tuning [default: --dataset]
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Accept an autoencoder that missed its pretraining gate
    #[arg(long)]
    pub allow_ungated: bool,
    #[command(flatten)]
    pub opts: FinetuneOpts,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Original sentences, one per line
    #[arg(long)]
    pub original: PathBuf,
    /// Generated sentences aligned with --original
    #[arg(long)]
    pub generated: PathBuf,
    /// Target label per line
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Unchanged second sentence per line (pair tasks)
    #[arg(long)]
    pub second: Option<PathBuf>,
    /// Classifier for the fool rate (needs --labels and --vocab)
    #[arg(long, requires_all = ["labels", "vocab"])]
    pub clf: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Labelled TSV for the PMI ranking
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Class whose indicative terms are ranked [default: the single label in --labels]
    #[arg(long)]
    pub target: Option<String>,
    /// Sentiment lexicon TSV: `token<TAB>positive<TAB>negative<TAB>is_adjective`
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// POS lexicon: `token<TAB>CATEGORY`; unknown tokens use the built-in rules
    #[arg(long)]
    pub tags: Option<PathBuf>,
    /// Externally extracted rationales aligned with --original
    #[arg(long)]
    pub extraction: Option<PathBuf>,
    #[command(flatten)]
    pub opts: AnalyzeOpts,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// run.json written by an earlier command
    pub manifest: PathBuf,
}
