//! Tokenization, vocabularies, embedding files, labelled datasets and the
//! synthetic corpus generator.

mod dataset;
mod embeddings;
mod synthetic;
mod tokenize;
mod vocab;

pub use dataset::{
    load_dataset, read_aligned_lines, read_corpus, read_text_dataset, write_lines, Example, LabeledDataset, Split,
    TextDataset, TextExample,
};
pub use embeddings::{load_embeddings, EmbeddingTable, EMBED_INIT_RANGE};
pub use synthetic::{class_name, generate_synthetic, pseudo_word, SyntheticData, SyntheticSpec};
pub use tokenize::{tokenize, PUNCTUATION};
pub use vocab::{Vocabulary, BOS, DEFAULT_MAX_VOCAB, EOS, PAD, SPECIAL_TOKENS, UNK};
