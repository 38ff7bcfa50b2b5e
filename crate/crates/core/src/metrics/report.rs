use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::bleu::bleu4;
use super::retrieval::RetrievalReport;
use crate::data::Vocabulary;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub pair_id: String,
    pub candidate: String,
    pub bleu4: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub avg_bleu4: f64,
    /// Distinct non-reserved tokens over every generated expression.
    pub distinct_words: usize,
    pub items: Vec<GenerationRecord>,
}

impl GenerationReport {
    pub fn check_invariants(&self, vocab_size: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.avg_bleu4) || self.items.iter().any(|r| !(0.0..=1.0).contains(&r.bleu4)) {
            return Err(Error::Contract("BLEU outside [0,1]".into()));
        }
        if self.distinct_words > vocab_size {
            return Err(Error::Contract(format!(
                "{} distinct words exceed vocabulary size {vocab_size}",
                self.distinct_words
            )));
        }
        Ok(())
    }
}

/// Sentence BLEU-4 per pair, averaged, plus the distinct-word count.
///
/// An empty generation scores 0 rather than failing the whole report.
pub fn generation_report(
    generated: &BTreeMap<String, Vec<String>>,
    references: &BTreeMap<String, Vec<Vec<String>>>,
    vocab: &Vocabulary,
) -> Result<GenerationReport> {
    let mut mismatched: Vec<String> = references.keys().filter(|k| !generated.contains_key(*k)).cloned().collect();
    mismatched.extend(generated.keys().filter(|k| !references.contains_key(*k)).cloned());
    if !mismatched.is_empty() {
        mismatched.sort();
        return Err(Error::KeyMismatch(mismatched));
    }
    if generated.is_empty() {
        return Err(Error::Empty("no generated expressions".into()));
    }
    let reserved: BTreeSet<usize> = (0..vocab.len()).filter(|&i| vocab.is_reserved(i)).collect();
    let mut words = BTreeSet::new();
    let mut items = Vec::with_capacity(generated.len());
    for (id, cand) in generated {
        let refs = &references[id];
        let score = if cand.is_empty() { 0.0 } else { bleu4(cand, refs)? };
        for w in cand {
            let is_reserved = vocab.id(w).is_some_and(|i| reserved.contains(&i));
            if !is_reserved {
                words.insert(w.as_str());
            }
        }
        items.push(GenerationRecord {
            pair_id: id.clone(),
            candidate: cand.join(" "),
            bleu4: score,
        });
    }
    let avg = items.iter().map(|r| r.bleu4).sum::<f64>() / items.len() as f64;
    Ok(GenerationReport {
        avg_bleu4: avg,
        distinct_words: words.len(),
        items,
    })
}

/// Mean wall time per sample for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub num_params: usize,
    pub generation_sec: f64,
    pub comprehension_sec: f64,
}

/// The METEOR column is left empty so external scores can be merged in.
pub fn generation_table(rows: &[(&str, &GenerationReport)]) -> String {
    let mut s = String::from("method\tavg_bleu4\tavg_meteor\tdistinct_words\n");
    for (m, r) in rows {
        s.push_str(&format!("{m}\t{:.6}\t\t{}\n", r.avg_bleu4, r.distinct_words));
    }
    s
}

pub fn retrieval_table(rows: &[(&str, &RetrievalReport)]) -> String {
    let mut s = String::from("method\tmap\trank1\trank2\trank3\n");
    for (m, r) in rows {
        s.push_str(&format!("{m}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n", r.map, r.rank1, r.rank2, r.rank3));
    }
    s
}

pub fn timing_table(rows: &[(&str, &TimingRow)]) -> String {
    let mut s = String::from("method\tnum_params\tgeneration_sec\tcomprehension_sec\n");
    for (m, r) in rows {
        s.push_str(&format!("{m}\t{}\t{:.6}\t{:.6}\n", r.num_params, r.generation_sec, r.comprehension_sec));
    }
    s
}
