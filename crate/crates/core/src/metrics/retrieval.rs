use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RANK_KS: [usize; 3] = [1, 2, 3];

/// Comprehension scores over a set of queries, one relevant pair each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    /// Mean of `1/k` over queries.
    pub map: f64,
    pub rank1: f64,
    pub rank2: f64,
    pub rank3: f64,
    pub ranks: Vec<usize>,
}

impl RetrievalReport {
    pub fn accuracy(&self, k: usize) -> Option<f64> {
        match k {
            1 => Some(self.rank1),
            2 => Some(self.rank2),
            3 => Some(self.rank3),
            _ => None,
        }
    }

    /// Range, monotonicity in `k` and `mAP ≥ rank-1`.
    pub fn check_invariants(&self) -> Result<()> {
        let vals = [self.map, self.rank1, self.rank2, self.rank3];
        if vals.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Contract(format!("retrieval metric out of [0,1]: {vals:?}")));
        }
        if !(self.rank1 <= self.rank2 && self.rank2 <= self.rank3) {
            return Err(Error::Contract(format!(
                "rank accuracies not monotone: {} {} {}",
                self.rank1, self.rank2, self.rank3
            )));
        }
        if self.map < self.rank1 {
            return Err(Error::Contract(format!("mAP {} below rank-1 {}", self.map, self.rank1)));
        }
        Ok(())
    }
}

pub fn retrieval_metrics(ranks: &[usize]) -> Result<RetrievalReport> {
    if ranks.is_empty() {
        return Err(Error::Empty("no ranks to score".into()));
    }
    if let Some(&bad) = ranks.iter().find(|&&k| k == 0) {
        return Err(Error::Contract(format!("rank must be >= 1, got {bad}")));
    }
    let n = ranks.len() as f64;
    let map = ranks.iter().map(|&k| 1.0 / k as f64).sum::<f64>() / n;
    let acc = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(RetrievalReport {
        map,
        rank1: acc(1),
        rank2: acc(2),
        rank3: acc(3),
        ranks: ranks.to_vec(),
    })
}
