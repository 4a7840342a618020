//! Training phases: autoencoder pretraining and adaptation, classifier
//! training, decoder fine-tuning against a frozen classifier, and its
//! label-flip variant.
//!
//! Every phase runs minibatches of independent per-example tapes. Gradients
//! are summed in example order, so results are bit-identical for a fixed seed
//! whatever the thread count.

mod classifier;
mod config;
mod finetune;
mod log;
mod optim;
mod reconstruct;

pub use classifier::{classifier_accuracy, predict_labels, train_classifier};
pub use config::{AdamConfig, Phase, Precision, TrainingConfig};
pub use finetune::{
    finetune_decoder, finetune_step, finetune_with_flip, is_decoder_param, similarity_penalty, FinetuneStep,
};
pub use log::{EpochRecord, TrainingLog};
pub use optim::{clip_global_norm, example_rng, global_norm, shuffle_rng, Adam, BatchOut, ExampleOut, Trainer};
pub use reconstruct::{
    adapt_autoencoder, generate_reconstructions, heldout_split, pretrain_autoencoder, pretrain_autoencoder_unchecked,
    token_accuracy,
};
