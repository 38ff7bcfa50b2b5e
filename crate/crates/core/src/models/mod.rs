//! The encoder-decoder generator with per-word stream attention and its two
//! ablations.

pub mod attention;
pub mod check;
pub mod config;
pub mod forward;
pub mod inference;
pub mod model;

pub use check::{gradient_check, tiny_config, tiny_gradient_check, TINY_FRAMES, TINY_WORDS};
pub use attention::{scale_features, scale_features_node, AttentionWeights};
pub use config::VirefConfig;
pub use forward::{Features, PassContext, Prepared, StepNodes};
pub use inference::{SequenceScore, Session, StepOutput};
pub use model::{meta_path, Model, ModelMeta, ModelVariant, EMBEDDING, INIT_LOGITS};
