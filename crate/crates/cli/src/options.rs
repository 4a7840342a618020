//! Tunable settings shared by the command line and the TOML config file.
//!
//! Every tunable is optional in both places. A command resolves each one as
//! flag, then config file, then the built-in default.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

macro_rules! options {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                $(#[$fm])*
                #[arg(long)]
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            /// Field-wise: keep `self` where set, otherwise take `fallback`.
            pub fn or(self, fallback: Self) -> Self {
                $name { $($field: self.$field.or(fallback.$field),)* }
            }
        }
    };
}

options!(
    /// Synthetic corpus shape.
    SynthOpts {
        /// Distinct word types, planted words included
        vocab_size: usize,
        /// Sentences over all splits
        num_examples: usize,
        num_classes: usize,
        min_len: usize,
        max_len: usize,
        artifacts_per_class: usize,
        /// Chance that a sentence carries its own class's artifact
        artifact_in_class_prob: f64,
        /// Chance that a sentence carries another class's artifact
        artifact_cross_class_prob: f64,
        signal_words_per_class: usize,
        signal_tokens_per_sentence: usize,
        dev_fraction: f64,
        test_fraction: f64,
    }
);

options!(
    /// Autoencoder pretraining.
    PretrainOpts {
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        clip_norm: f64,
        /// Held-out token accuracy that counts as converged
        target_accuracy: f64,
        heldout_fraction: f64,
        embed_dim: usize,
        /// Per-direction encoder width; the decoder is twice as wide
        enc_hidden: usize,
        attn_dim: usize,
        /// Longest sentence the autoencoder accepts
        max_len: usize,
        /// Vocabulary cap when building it from the corpus
        max_vocab: usize,
    }
);

options!(
    /// Autoencoder adaptation to a task corpus.
    AdaptOpts {
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        clip_norm: f64,
        target_accuracy: f64,
    }
);

options!(
    /// Classifier training.
    TrainClfOpts {
        /// rnn, cnn, dan or pair
        variant: String,
        /// concat or rich (pair classifier)
        combiner: String,
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        clip_norm: f64,
        embed_dim: usize,
        hidden: usize,
        num_filters: usize,
        #[arg(value_delimiter = ',')]
        filter_widths: Vec<usize>,
        /// Word dropout of the averaging classifier
        dan_dropout: f64,
    }
);

options!(
    /// Decoder fine-tuning.
    FinetuneOpts {
        learning_rate: f64,
        epochs: usize,
        batch_size: usize,
        clip_norm: f64,
        /// Gumbel-Softmax temperature
        tau: f64,
        word_dropout_rate: f64,
        /// Weight of the similarity term (flip runs)
        lambda: f64,
        /// Generated length cap relative to the input length
        max_len_factor: f64,
    }
);

options!(
    /// Analysis settings.
    AnalyzeOpts {
        /// Terms per list compared by the rank correlation
        top_k: usize,
        /// Count added to every word/class cell before computing PMI
        smoothing: f64,
    }
);

/// Contents of a `--config` file. Top-level keys mirror the global flags,
/// tables mirror subcommands.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub precision: Option<String>,
    pub synth: SynthOpts,
    pub pretrain: PretrainOpts,
    pub adapt: AdaptOpts,
    pub train_clf: TrainClfOpts,
    pub finetune: FinetuneOpts,
    pub analyze: AnalyzeOpts,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
