use std::collections::HashMap;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and total candidate n-grams of order `n`.
pub fn modified_precision<S: AsRef<str>, R: AsRef<str>>(candidate: &[S], references: &[Vec<R>], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
    for r in references {
        for (g, c) in ngram_counts(r, n) {
            let slot = max_ref.entry(g).or_insert(0);
            *slot = (*slot).max(c);
        }
    }
    let matched = cand.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum();
    (matched, candidate.len().saturating_sub(n - 1))
}

/// Reference length closest to `c`; ties go to the shorter one.
pub fn closest_ref_len<R>(c: usize, references: &[Vec<R>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

/// Sentence-level BLEU-4, unsmoothed: any zero precision gives 0.
pub fn bleu4<S: AsRef<str>, R: AsRef<str>>(candidate: &[S], references: &[Vec<R>]) -> Result<f64> {
    if candidate.is_empty() {
        return Err(Error::Empty("BLEU candidate has no tokens".into()));
    }
    if references.is_empty() {
        return Err(Error::Empty("BLEU needs at least one reference".into()));
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let (m, total) = modified_precision(candidate, references, n);
        if m == 0 || total == 0 {
            return Ok(0.0);
        }
        log_sum += (m as f64 / total as f64).ln();
    }
    let c = candidate.len();
    let r = closest_ref_len(c, references);
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    Ok((bp * (log_sum / MAX_ORDER as f64).exp()).clamp(0.0, 1.0))
}
