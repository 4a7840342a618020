//! Susceptibility identification through fine-tuning.
//!
//! A sequence autoencoder is pretrained to reconstruct text, then its decoder is
//! fine-tuned so that a frozen classifier, reading the decoder's discrete
//! output, predicts a chosen label. The rewritten text shows what the
//! classifier responds to. Label-flip fine-tuning plus the analysis suite
//! points at dataset artifacts the classifier has absorbed.

pub mod analysis;
pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod models;
pub mod pipeline;
pub mod relax;

pub use error::{Error, Result};
