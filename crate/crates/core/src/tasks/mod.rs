//! Training, beam-search generation and comprehension by ranking.

pub mod beam;
pub mod comprehend;
pub mod evaluate;
pub mod train;

pub use beam::{generate, BeamHypothesis, Generated};
pub use comprehend::{comprehend, RankedRetrieval};
pub use evaluate::{comprehension_queries, run_comprehension, run_generation, GeneratedItem, Query};
pub use train::{evaluate_loss, train, LossHistory, TrainConfig, TrainOutcome};
