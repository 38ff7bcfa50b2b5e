//! Precomputed feature files.
//!
//! ```text
//! "VRFT" | version u32 | frames u32 | streams u32 | dim u32 | f32 LE × frames·streams·dim
//! ```
//! Data is frame-major, then stream-major. Per-frame files carry 5 streams;
//! clip-level files carry 6 streams and a single frame.

use std::path::Path;

use crate::error::{Error, LoadError, Result};
use crate::scalar::{cast_slice, Scalar};

pub const FEATURE_MAGIC: [u8; 4] = *b"VRFT";
pub const FEATURE_VERSION: u32 = 1;
pub const FRAME_STREAMS: usize = 5;
pub const CLIP_STREAMS: usize = 6;

/// Stream order inside every frame.
pub const FRAME_STREAM_NAMES: [&str; FRAME_STREAMS] =
    ["main_appearance", "context_appearance", "scene", "main_mask", "context_mask"];

pub const CLIP_STREAM_NAMES: [&str; CLIP_STREAMS] = [
    "avg_main_appearance",
    "avg_context_appearance",
    "motion_main",
    "motion_context",
    "motion_pair",
    "motion_scene",
];

/// The raw contents of a feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub frames: usize,
    pub streams: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl FeatureBlock {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.data.len());
        out.extend_from_slice(&FEATURE_MAGIC);
        for v in [FEATURE_VERSION, self.frames as u32, self.streams as u32, self.dim as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], expected_streams: usize) -> std::result::Result<Self, LoadError> {
        if bytes.len() < 20 {
            return Err(LoadError::Truncated {
                needed: 20,
                found: bytes.len(),
            });
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
        if magic != FEATURE_MAGIC {
            return Err(LoadError::BadMagic(magic));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let version = word(0);
        if version != FEATURE_VERSION {
            return Err(LoadError::BadVersion(version));
        }
        let (frames, streams, dim) = (word(1) as usize, word(2) as usize, word(3) as usize);
        if streams != expected_streams {
            return Err(LoadError::StreamCount {
                expected: expected_streams as u32,
                found: streams as u32,
            });
        }
        if frames == 0 || dim == 0 {
            return Err(LoadError::BadHeader(format!("frames {frames}, dim {dim}")));
        }
        let needed = 20 + 4 * frames * streams * dim;
        if bytes.len() < needed {
            return Err(LoadError::Truncated {
                needed,
                found: bytes.len(),
            });
        }
        if bytes.len() > needed {
            return Err(LoadError::Trailing(bytes.len() - needed));
        }
        let data = bytes[20..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(Self {
            frames,
            streams,
            dim,
            data,
        })
    }

    fn read(path: &Path, expected_streams: usize) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes, expected_streams).map_err(|kind| Error::Load {
            path: path.to_path_buf(),
            kind,
        })
    }
}

/// `m` frames × 5 streams × `D` values for one (main, context) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<T> {
    frames: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureSequence<T> {
    pub fn new(frames: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if frames == 0 {
            return Err(Error::Empty("feature sequence has no frames".into()));
        }
        if dim == 0 {
            return Err(Error::Config("feature dim must be positive".into()));
        }
        let n = frames * FRAME_STREAMS * dim;
        if data.len() != n {
            return Err(Error::shape("feature sequence", &[frames, FRAME_STREAMS, dim], &[data.len()]));
        }
        Ok(Self { frames, dim, data })
    }

    /// From per-frame stream lists.
    pub fn from_frames(frames: &[[Vec<T>; FRAME_STREAMS]]) -> Result<Self> {
        let dim = frames.first().map(|f| f[0].len()).unwrap_or(0);
        let mut data = Vec::with_capacity(frames.len() * FRAME_STREAMS * dim);
        for (i, f) in frames.iter().enumerate() {
            for (k, s) in f.iter().enumerate() {
                if s.len() != dim {
                    return Err(Error::shape(format!("frame {i} stream {k}"), &[dim], &[s.len()]));
                }
                data.extend_from_slice(s);
            }
        }
        Self::new(frames.len(), dim, data)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Concatenated `5·D` vector of frame `i`.
    pub fn frame(&self, i: usize) -> &[T] {
        let w = FRAME_STREAMS * self.dim;
        &self.data[i * w..(i + 1) * w]
    }

    pub fn stream(&self, frame: usize, stream: usize) -> &[T] {
        let start = (frame * FRAME_STREAMS + stream) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn cast<U: Scalar>(&self) -> FeatureSequence<U> {
        FeatureSequence {
            frames: self.frames,
            dim: self.dim,
            data: cast_slice(&self.data),
        }
    }

    pub fn to_block(&self) -> FeatureBlock {
        FeatureBlock {
            frames: self.frames,
            streams: FRAME_STREAMS,
            dim: self.dim,
            data: self.data.iter().map(|v| v.to_f32_lossy()).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_block().encode())?;
        Ok(())
    }
}

/// Six clip-level vectors for the encoder-free baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipFeatureSet<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> ClipFeatureSet<T> {
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 || data.len() != CLIP_STREAMS * dim {
            return Err(Error::shape("clip feature set", &[CLIP_STREAMS, dim], &[data.len()]));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stream(&self, k: usize) -> &[T] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    /// All six streams concatenated.
    pub fn concatenated(&self) -> &[T] {
        &self.data
    }

    pub fn cast<U: Scalar>(&self) -> ClipFeatureSet<U> {
        ClipFeatureSet {
            dim: self.dim,
            data: cast_slice(&self.data),
        }
    }

    pub fn to_block(&self) -> FeatureBlock {
        FeatureBlock {
            frames: 1,
            streams: CLIP_STREAMS,
            dim: self.dim,
            data: self.data.iter().map(|v| v.to_f32_lossy()).collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_block().encode())?;
        Ok(())
    }
}

pub fn load_feature_sequence<T: Scalar>(path: &Path) -> Result<FeatureSequence<T>> {
    let b = FeatureBlock::read(path, FRAME_STREAMS)?;
    FeatureSequence::new(b.frames, b.dim, b.data.iter().map(|&v| T::from_f32_lossless(v)).collect())
}

pub fn load_clip_features<T: Scalar>(path: &Path) -> Result<ClipFeatureSet<T>> {
    let b = FeatureBlock::read(path, CLIP_STREAMS)?;
    if b.frames != 1 {
        return Err(Error::Load {
            path: path.to_path_buf(),
            kind: LoadError::BadHeader(format!("clip file must have 1 frame, found {}", b.frames)),
        });
    }
    ClipFeatureSet::new(b.dim, b.data.iter().map(|&v| T::from_f32_lossless(v)).collect())
}
