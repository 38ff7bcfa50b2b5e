use std::cmp::Ordering;

use crate::diffcore::LstmState;
use crate::error::{Error, Result};
use crate::models::{Features, Model, Session};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamHypothesis<T> {
    /// Starts with `<start>`.
    pub tokens: Vec<usize>,
    pub log_prob: T,
    pub state: LstmState<T>,
    pub finished: bool,
}

/// Result of a beam search.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated<T> {
    /// `<start> … <end>` when finished, otherwise `<start>` plus `max_len` tokens.
    pub tokens: Vec<usize>,
    pub log_prob: T,
    pub finished: bool,
}

impl<T> Generated<T> {
    /// Generated tokens without `<start>` and a final `<end>`.
    pub fn words(&self) -> &[usize] {
        let end = if self.finished { self.tokens.len() - 1 } else { self.tokens.len() };
        &self.tokens[1..end]
    }
}

/// Higher log-probability first; exact ties go to the lexicographically
/// smaller token sequence.
fn rank<T: Scalar>(a: &(T, Vec<usize>), b: &(T, Vec<usize>)) -> Ordering {
    b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.cmp(&b.1))
}

/// Beam search without length normalization. Finished hypotheses stay in the
/// beam and compete with extensions of the unfinished ones.
pub fn generate<T: Scalar>(
    model: &Model<T>,
    features: Features<'_, T>,
    start: usize,
    end: usize,
    beam_size: usize,
    max_len: usize,
) -> Result<Generated<T>> {
    if beam_size == 0 {
        return Err(Error::Config("beam size must be at least 1".into()));
    }
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let n = model.config().vocab_size;
    if start >= n || end >= n {
        return Err(Error::InvalidToken {
            id: start.max(end),
            vocab_size: n,
        });
    }
    let mut session = Session::new(model, features)?;
    let init = session.init()?;
    let mut beam = vec![BeamHypothesis {
        tokens: vec![start],
        log_prob: T::zero(),
        state: init,
        finished: false,
    }];
    for _ in 0..max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        // Candidates reference (parent, token, step output); finished parents carry over.
        let mut scored: Vec<((T, Vec<usize>), usize, Option<(usize, usize)>)> = Vec::new();
        let mut outputs = Vec::with_capacity(beam.len());
        for (hi, h) in beam.iter().enumerate() {
            if h.finished {
                scored.push(((h.log_prob, h.tokens.clone()), hi, None));
                continue;
            }
            let out = session.step(*h.tokens.last().expect("non-empty"), &h.state)?;
            for (w, &lp) in out.log_probs.iter().enumerate() {
                let mut t = h.tokens.clone();
                t.push(w);
                scored.push(((h.log_prob + lp, t), hi, Some((outputs.len(), w))));
            }
            outputs.push(out);
        }
        scored.sort_by(|a, b| rank(&a.0, &b.0));
        scored.truncate(beam_size);
        beam = scored
            .into_iter()
            .map(|((lp, tokens), hi, step)| match step {
                None => beam[hi].clone(),
                Some((oi, w)) => BeamHypothesis {
                    tokens,
                    log_prob: lp,
                    state: outputs[oi].state.clone(),
                    finished: w == end,
                },
            })
            .collect();
    }
    let pick = |finished: bool| {
        beam.iter()
            .filter(|h| h.finished == finished)
            .min_by(|a, b| rank(&(a.log_prob, a.tokens.clone()), &(b.log_prob, b.tokens.clone())))
    };
    let best = pick(true).or_else(|| pick(false)).expect("beam is never empty");
    Ok(Generated {
        tokens: best.tokens.clone(),
        log_prob: best.log_prob,
        finished: best.finished,
    })
}
