use std::path::Path;

use rand::Rng;

use super::vocab::Vocabulary;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::rng_for;

pub const EMBEDDING_DIM: usize = 50;
const UNMATCHED_BOUND: f64 = 0.1;

/// One row per vocabulary token.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    pub table: Tensor<T>,
    pub trainable: bool,
    /// Rows taken from the file; the rest were randomly initialized.
    pub matched: usize,
}

impl<T: Scalar> EmbeddingTable<T> {
    /// Every row uniform in `[-0.1, 0.1]`.
    pub fn random(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = rng_for(seed, "embeddings");
        let data = (0..vocab_size * dim)
            .map(|_| T::lit(rng.random_range(-UNMATCHED_BOUND..=UNMATCHED_BOUND)))
            .collect();
        Self {
            table: Tensor::new(vec![vocab_size, dim], data).expect("shape matches"),
            trainable: true,
            matched: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn row(&self, id: usize) -> &[T] {
        self.table.row(id)
    }
}

/// Reads `token v_1 … v_dim` lines. Vocabulary tokens found in the file take
/// those vectors; all others keep their seeded random row.
pub fn load_embeddings<T: Scalar>(path: &Path, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable<T>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    let mut table = EmbeddingTable::<T>::random(vocab.len(), dim, seed);
    let mut seen = vec![false; vocab.len()];
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<&str> = parts.collect();
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected {dim} values after the token, found {}", values.len()),
            });
        }
        let mut row = Vec::with_capacity(dim);
        for v in values {
            let x: f64 = v.parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("not a number: {v:?}"),
            })?;
            row.push(T::lit(x));
        }
        if let Some(id) = vocab.id(token) {
            table.table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&row);
            seen[id] = true;
        }
    }
    table.matched = seen.iter().filter(|&&s| s).count();
    Ok(table)
}
