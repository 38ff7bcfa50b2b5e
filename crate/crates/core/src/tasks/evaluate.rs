use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::beam::generate;
use super::comprehend::{comprehend, RankedRetrieval};
use crate::data::{decode_words, encode_refexp, keep_sequence, tokenize, Corpus, TokenSequence, Vocabulary};
use crate::error::Result;
use crate::models::{Features, Model};
use crate::scalar::Scalar;

/// One generated expression with the pair's references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedItem {
    pub pair_id: String,
    pub text: String,
    pub log_prob: f64,
    pub finished: bool,
    pub references: Vec<String>,
    #[serde(skip)]
    pub seconds: f64,
}

impl GeneratedItem {
    pub fn candidate_tokens(&self) -> Vec<String> {
        tokenize(&self.text)
    }

    pub fn reference_tokens(&self) -> Vec<Vec<String>> {
        self.references.iter().map(|r| tokenize(r)).collect()
    }
}

/// Beam-search output for each listed pair.
pub fn run_generation<T: Scalar>(
    model: &Model<T>,
    corpus: &Corpus<T>,
    pairs: &[usize],
    vocab: &Vocabulary,
    beam_size: usize,
    max_len: usize,
) -> Result<Vec<GeneratedItem>> {
    pairs
        .par_iter()
        .map(|&i| {
            let p = &corpus.pairs[i];
            let t0 = Instant::now();
            let g = generate(model, Features::from(p), vocab.start(), vocab.end(), beam_size, max_len)?;
            let seconds = t0.elapsed().as_secs_f64();
            Ok(GeneratedItem {
                pair_id: p.record.pair_id.clone(),
                text: decode_words(g.words(), vocab),
                log_prob: g.log_prob.to_f64_lossy(),
                finished: g.finished,
                references: p.record.refexps.clone(),
                seconds,
            })
        })
        .collect()
}

/// A comprehension query: one expression of a target pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub pair: usize,
    pub text: String,
    pub tokens: TokenSequence,
}

/// The first expression of each listed pair that passes the length filter.
pub fn comprehension_queries<T: Scalar>(
    corpus: &Corpus<T>,
    pairs: &[usize],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    for &i in pairs {
        for re in &corpus.pairs[i].record.refexps {
            let tokens = encode_refexp(re, vocab)?;
            if keep_sequence(&tokens, max_len) {
                out.push(Query {
                    pair: i,
                    text: re.clone(),
                    tokens,
                });
                break;
            }
        }
    }
    Ok(out)
}

/// Ranks every pair of the query's video. Returns each ranking with its wall time.
pub fn run_comprehension<T: Scalar>(model: &Model<T>, corpus: &Corpus<T>, queries: &[Query]) -> Result<Vec<(RankedRetrieval, f64)>> {
    let videos = corpus.videos();
    queries
        .iter()
        .map(|q| {
            let target = &corpus.pairs[q.pair].record;
            let members = &videos[&target.video_id];
            let candidates: Vec<(String, Features<'_, T>)> = members
                .iter()
                .map(|&j| (corpus.pairs[j].record.pair_id.clone(), Features::from(&corpus.pairs[j])))
                .collect();
            let t0 = Instant::now();
            let r = comprehend(model, &q.text, &q.tokens, &candidates, Some(&target.pair_id))?;
            Ok((r, t0.elapsed().as_secs_f64()))
        })
        .collect()
}
