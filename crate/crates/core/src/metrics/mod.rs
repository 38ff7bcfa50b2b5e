//! BLEU-4 and distinct-word counts for generation; mAP and rank-k accuracy
//! for comprehension; tab-separated report tables.

pub mod bleu;
pub mod report;
pub mod retrieval;

pub use bleu::{bleu4, closest_ref_len, modified_precision};
pub use report::{generation_report, generation_table, retrieval_table, timing_table, GenerationRecord, GenerationReport, TimingRow};
pub use retrieval::{retrieval_metrics, RetrievalReport, RANK_KS};
