//! Value-level numerics shared by the graph ops and by inference code.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Max-shifted softmax; total on finite input.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut out: Vec<T> = logits.iter().map(|&x| (x - m).exp()).collect();
    let z: T = out.iter().copied().sum();
    for v in &mut out {
        *v /= z;
    }
    out
}

pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let lse = logits.iter().map(|&x| (x - m).exp()).sum::<T>().ln() + m;
    logits.iter().map(|&x| x - lse).collect()
}

/// Mean of `-ln p_j[target_j]` over the steps whose mask bit is set.
pub fn cross_entropy<T: Scalar>(dists: &[Vec<T>], targets: &[usize], mask: &[bool]) -> Result<T> {
    if dists.len() != targets.len() || dists.len() != mask.len() {
        return Err(Error::shape(
            "cross_entropy steps",
            &[dists.len(), dists.len()],
            &[targets.len(), mask.len()],
        ));
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for ((p, &t), &m) in dists.iter().zip(targets).zip(mask) {
        if !m {
            continue;
        }
        let pt = *p.get(t).ok_or(Error::InvalidToken {
            id: t,
            vocab_size: p.len(),
        })?;
        total -= pt.ln();
        count += 1;
    }
    if count == 0 {
        return Err(Error::DegenerateBatch("no unmasked target in cross-entropy".into()));
    }
    Ok(total / T::from_usize_exact(count))
}
