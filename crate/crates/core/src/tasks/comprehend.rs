use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TokenSequence;
use crate::error::{Error, Result};
use crate::models::{Features, Model};
use crate::scalar::Scalar;

/// Candidates of one query ordered by descending score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRetrieval {
    pub query: String,
    pub ranking: Vec<(String, f64)>,
    /// 1-based rank of the ground-truth pair, when known.
    pub rank: Option<usize>,
}

/// Scores every candidate by `log P(refexp | candidate)` and sorts descending;
/// exact ties keep input order. Candidates are scored in parallel and merged
/// in input order.
pub fn comprehend<T: Scalar>(
    model: &Model<T>,
    query: &str,
    refexp: &TokenSequence,
    candidates: &[(String, Features<'_, T>)],
    truth: Option<&str>,
) -> Result<RankedRetrieval> {
    if candidates.is_empty() {
        return Err(Error::Empty("no candidate pairs to rank".into()));
    }
    let scores = candidates
        .par_iter()
        .map(|(_, f)| model.sequence_log_prob(*f, refexp).map(|s| s.to_f64_lossy()))
        .collect::<Result<Vec<f64>>>()?;
    let mut ranking: Vec<(String, f64)> = candidates.iter().map(|(id, _)| id.clone()).zip(scores).collect();
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1));
    let rank = match truth {
        None => None,
        Some(t) => {
            let hits: Vec<usize> = ranking.iter().enumerate().filter(|(_, (id, _))| id == t).map(|(i, _)| i + 1).collect();
            match hits.as_slice() {
                [k] => Some(*k),
                [] => return Err(Error::Contract(format!("ground-truth pair {t:?} is not among the candidates"))),
                _ => return Err(Error::Contract(format!("ground-truth pair {t:?} appears {} times", hits.len()))),
            }
        }
    };
    Ok(RankedRetrieval {
        query: query.to_string(),
        ranking,
        rank,
    })
}
