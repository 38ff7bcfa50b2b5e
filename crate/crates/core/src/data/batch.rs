use super::vocab::{TokenSequence, Vocabulary};
use crate::error::{Error, Result};

pub const MAX_RE_LEN: usize = 25;

/// Rows `<start> w_1 … w_n <end> <nil>…` padded to a common length, with
/// one mask bit per prediction target (`row[1..]`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaddedBatch {
    pub rows: Vec<Vec<usize>>,
    pub masks: Vec<Vec<bool>>,
    /// Indices into the input list of the sequences that were kept.
    pub kept_indices: Vec<usize>,
    pub dropped: usize,
}

impl PaddedBatch {
    pub fn kept(&self) -> usize {
        self.rows.len()
    }
}

/// Keeps sequences whose word count is below `max_len`.
pub fn keep_sequence(seq: &TokenSequence, max_len: usize) -> bool {
    seq.word_count() < max_len
}

/// Drops every expression with `max_len` or more words and pads the rest
/// with `<nil>` to the longest survivor.
pub fn filter_and_pad(seqs: &[TokenSequence], max_len: usize, vocab: &Vocabulary) -> Result<PaddedBatch> {
    if max_len < 2 {
        return Err(Error::Config(format!("max_len must be at least 2, got {max_len}")));
    }
    let kept_indices: Vec<usize> = seqs
        .iter()
        .enumerate()
        .filter(|(_, s)| keep_sequence(s, max_len))
        .map(|(i, _)| i)
        .collect();
    if kept_indices.is_empty() {
        return Err(Error::DegenerateBatch(format!(
            "all {} sequences have {max_len} or more words",
            seqs.len()
        )));
    }
    let width = kept_indices.iter().map(|&i| seqs[i].ids().len()).max().expect("non-empty");
    let mut rows = Vec::with_capacity(kept_indices.len());
    let mut masks = Vec::with_capacity(kept_indices.len());
    for &i in &kept_indices {
        let ids = seqs[i].ids();
        let mut row = ids.to_vec();
        row.resize(width, vocab.nil());
        let mask = (1..width).map(|j| j < ids.len()).collect();
        rows.push(row);
        masks.push(mask);
    }
    Ok(PaddedBatch {
        rows,
        masks,
        dropped: seqs.len() - kept_indices.len(),
        kept_indices,
    })
}
