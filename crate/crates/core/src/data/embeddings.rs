use std::path::Path;

use rand::Rng;

use super::vocab::{Vocabulary, UNK};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Half-width of the uniform range used for rows without a pretrained vector.
pub const EMBED_INIT_RANGE: f64 = 0.1;

/// `|V| × d` word vectors aligned with a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub trainable: bool,
    /// Rows filled from a pretrained file rather than random init.
    pub loaded_rows: usize,
}

impl EmbeddingTable {
    pub fn random<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let data = (0..vocab_size * dim)
            .map(|_| rng.gen_range(-EMBED_INIT_RANGE..EMBED_INIT_RANGE))
            .collect();
        EmbeddingTable {
            matrix: Tensor::matrix(vocab_size, dim, data).expect("positive extents"),
            trainable: true,
            loaded_rows: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn rows(&self) -> usize {
        self.matrix.shape()[0]
    }
}

/// Reads `token v1 … vd` lines. In-vocabulary rows take the file's vector;
/// everything else, and always the UNK row, keeps a uniform random init.
/// The dimension comes from the first line and is enforced after that.
pub fn load_embeddings<R: Rng + ?Sized>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line");
        let values: Vec<f64> = parts
            .map(|p| p.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, lineno, format!("bad float: {e}")))?;
        if values.is_empty() {
            return Err(Error::format(path, lineno, "no vector values"));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::format(
                    path,
                    lineno,
                    format!("dimension {} differs from {d}", values.len()),
                ))
            }
            _ => {}
        }
        if let Some(id) = vocab.contains(token).then(|| vocab.id(token)) {
            if id != UNK {
                rows[id] = Some(values);
            }
        }
    }
    let dim = dim.ok_or_else(|| Error::Empty(format!("{} has no vectors", path.display())))?;
    let mut table = EmbeddingTable::random(vocab.len(), dim, rng);
    let data = table.matrix.data_mut();
    for (id, row) in rows.into_iter().enumerate() {
        if let Some(row) = row {
            data[id * dim..(id + 1) * dim].copy_from_slice(&row);
            table.loaded_rows += 1;
        }
    }
    Ok(table)
}
