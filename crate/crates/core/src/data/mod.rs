//! Dataset manifest, vocabulary, tokenization, padding, splits and loaders for
//! precomputed features and word embeddings.

pub mod batch;
pub mod corpus;
pub mod embeddings;
pub mod features;
pub mod manifest;
pub mod split;
pub mod vocab;

pub use batch::{filter_and_pad, keep_sequence, PaddedBatch, MAX_RE_LEN};
pub use corpus::{Corpus, Example, PairData};
pub use embeddings::{load_embeddings, EmbeddingTable, EMBEDDING_DIM};
pub use features::{
    load_clip_features, load_feature_sequence, ClipFeatureSet, FeatureBlock, FeatureSequence, CLIP_STREAMS,
    FRAME_STREAMS,
};
pub use manifest::{read_manifest, write_manifest, Direction, PairRecord, Split};
pub use split::{split_dataset, split_sizes, DEFAULT_RATIOS};
pub use vocab::{build_vocabulary, decode, decode_words, encode_refexp, tokenize, TokenSequence, Vocabulary};
