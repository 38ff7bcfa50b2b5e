//! Deterministic synthetic world: object pairs with latent class, color,
//! motion and relation, rendered as five noisy per-frame feature streams and
//! described by templated referring expressions.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{
    build_vocabulary, split_dataset, write_manifest, ClipFeatureSet, Corpus, Direction, FeatureSequence, PairData,
    PairRecord, Split, Vocabulary, FRAME_STREAMS, DEFAULT_RATIOS,
};
use crate::error::{Error, Result};
use crate::seed::rng_for;

const FILLER_WORDS: [&str; 4] = ["the", "a", "which", "is"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub video_count: usize,
    pub pairs_per_video: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub stream_dim: usize,
    pub classes: Vec<String>,
    pub colors: Vec<String>,
    pub motions: Vec<String>,
    pub relations: Vec<String>,
    pub noise_std: f64,
    pub split_ratios: (f64, f64, f64),
    pub seed: u64,
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| w.to_string()).collect()
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            video_count: 40,
            pairs_per_video: 5,
            min_frames: 4,
            max_frames: 8,
            stream_dim: 32,
            classes: words(&["car", "person", "van", "bike"]),
            colors: words(&["red", "blue", "white", "black"]),
            motions: words(&["standing", "moving", "turning"]),
            relations: words(&["near", "approaching", "leaving", "behind"]),
            noise_std: 0.05,
            split_ratios: DEFAULT_RATIOS,
            seed: 0,
        }
    }
}

impl WorldConfig {
    /// Number of distinct attribute values across all alphabets.
    pub fn attribute_count(&self) -> usize {
        self.classes.len() + self.colors.len() + self.motions.len() + self.relations.len()
    }

    /// Objects needed per video: every record pair uses two fresh objects.
    fn objects_per_video(&self) -> usize {
        2 * self.pairs_per_video.div_ceil(2)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [
            ("classes", &self.classes),
            ("colors", &self.colors),
            ("motions", &self.motions),
            ("relations", &self.relations),
        ] {
            if a.is_empty() {
                return Err(Error::Config(format!("{name} alphabet is empty")));
            }
            let distinct: BTreeSet<&String> = a.iter().collect();
            if distinct.len() != a.len() {
                return Err(Error::Config(format!("{name} alphabet has duplicates")));
            }
            if let Some(w) = a.iter().find(|w| w.is_empty() || w.split_whitespace().count() != 1) {
                return Err(Error::Config(format!("{name} entry {w:?} must be a single word")));
            }
        }
        if self.stream_dim < self.attribute_count() {
            return Err(Error::Config(format!(
                "stream_dim {} is too small to embed {} attribute values",
                self.stream_dim,
                self.attribute_count()
            )));
        }
        if self.video_count == 0 || self.pairs_per_video == 0 {
            return Err(Error::Config("video_count and pairs_per_video must be positive".into()));
        }
        if self.video_count * self.pairs_per_video < 3 {
            return Err(Error::Config("at least 3 records are needed for a train/val/test split".into()));
        }
        if self.min_frames == 0 || self.min_frames > self.max_frames {
            return Err(Error::Config(format!(
                "frame range [{}, {}] is invalid",
                self.min_frames, self.max_frames
            )));
        }
        if self.classes.len() * self.colors.len() < self.objects_per_video() {
            return Err(Error::Config(format!(
                "{} distinct-looking objects per video need more than {} class/color combinations",
                self.objects_per_video(),
                self.classes.len() * self.colors.len()
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be a finite non-negative number, got {}", self.noise_std)));
        }
        Ok(())
    }

    /// Every word a template can emit.
    pub fn template_words(&self) -> Vec<String> {
        let mut w: Vec<String> = FILLER_WORDS.iter().map(|s| s.to_string()).collect();
        for a in [&self.classes, &self.colors, &self.motions, &self.relations] {
            w.extend(a.iter().map(|s| s.to_lowercase()));
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectLatent {
    pub class: usize,
    pub color: usize,
    pub motion: usize,
}

/// Latent description of one ordered (main, context) record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatentPair {
    pub main: ObjectLatent,
    pub context_class: usize,
    pub context_color: usize,
    pub relation: usize,
}

/// Fixed random projections of the attribute values.
#[derive(Debug, Clone)]
pub struct Projections {
    dim: usize,
    /// Orthonormal rows: classes, colors, motions, relations.
    basis: Vec<Vec<f64>>,
    /// Independent orthonormal rows for the scene stream: classes, colors.
    scene: Vec<Vec<f64>>,
    offsets: [usize; 4],
}

fn orthonormal_rows<R: Rng>(count: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(count);
    while rows.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for r in &rows {
            let d: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    rows
}

impl Projections {
    pub fn new(config: &WorldConfig) -> Self {
        let mut rng = rng_for(config.seed, "synth-projections");
        let (nc, nk, nm) = (config.classes.len(), config.colors.len(), config.motions.len());
        let basis = orthonormal_rows(config.attribute_count(), config.stream_dim, &mut rng);
        let scene = orthonormal_rows(nc + nk, config.stream_dim, &mut rng);
        Self {
            dim: config.stream_dim,
            basis,
            scene,
            offsets: [0, nc, nc + nk, nc + nk + nm],
        }
    }

    fn class(&self, i: usize) -> &[f64] {
        &self.basis[self.offsets[0] + i]
    }

    fn color(&self, i: usize) -> &[f64] {
        &self.basis[self.offsets[1] + i]
    }

    fn motion(&self, i: usize) -> &[f64] {
        &self.basis[self.offsets[2] + i]
    }

    fn relation(&self, i: usize) -> &[f64] {
        &self.basis[self.offsets[3] + i]
    }

    fn scene_class(&self, i: usize) -> &[f64] {
        &self.scene[i]
    }

    fn scene_color(&self, i: usize) -> &[f64] {
        &self.scene[self.offsets[1] + i]
    }
}

/// Time profile of motion `k`: the first motion is static.
fn motion_profile(k: usize, u: f64) -> f64 {
    if k == 0 {
        0.0
    } else {
        (k as f64 * PI * u).sin()
    }
}

/// Time profile of relation `r`, e.g. a constant distance or one that shrinks.
fn relation_profile(r: usize, u: f64) -> f64 {
    (r as f64 * PI * u).cos()
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    out.iter_mut().zip(x).for_each(|(o, v)| *o += a * v);
}

/// Renders one record. `noise` draws are consumed only when `noise_std > 0`.
pub fn render_pair<R: Rng>(
    latent: &LatentPair,
    frames: usize,
    proj: &Projections,
    noise_std: f64,
    rng: &mut R,
) -> (FeatureSequence<f32>, ClipFeatureSet<f32>) {
    let d = proj.dim;
    let normal = Normal::new(0.0, noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut noisy = |v: &mut Vec<f64>| {
        if noise_std > 0.0 {
            v.iter_mut().for_each(|x| *x += normal.sample(rng));
        }
    };
    let m = latent.main;
    let mut data = Vec::with_capacity(frames * FRAME_STREAMS * d);
    let mut sums = vec![vec![0.0; d]; FRAME_STREAMS];
    for t in 0..frames {
        let u = if frames > 1 { t as f64 / (frames - 1) as f64 } else { 0.0 };
        let mut streams = vec![vec![0.0; d]; FRAME_STREAMS];
        axpy(&mut streams[0], 1.0, proj.class(m.class));
        axpy(&mut streams[0], 1.0, proj.color(m.color));
        axpy(&mut streams[1], 1.0, proj.class(latent.context_class));
        axpy(&mut streams[1], 1.0, proj.color(latent.context_color));
        for (c, k) in [(m.class, m.color), (latent.context_class, latent.context_color)] {
            axpy(&mut streams[2], 0.5, proj.scene_class(c));
            axpy(&mut streams[2], 0.5, proj.scene_color(k));
        }
        axpy(&mut streams[3], 1.0 + 0.5 * motion_profile(m.motion, u), proj.motion(m.motion));
        axpy(
            &mut streams[4],
            1.0 + 0.5 * relation_profile(latent.relation, u),
            proj.relation(latent.relation),
        );
        for (k, mut s) in streams.into_iter().enumerate() {
            noisy(&mut s);
            axpy(&mut sums[k], 1.0 / frames as f64, &s);
            data.extend(s.iter().map(|&x| x as f32));
        }
    }
    let mut pair = vec![0.0; d];
    axpy(&mut pair, 1.0, proj.relation(latent.relation));
    noisy(&mut pair);
    let clip_streams = [&sums[0], &sums[1], &sums[3], &sums[4], &pair, &sums[2]];
    let clip: Vec<f32> = clip_streams.iter().flat_map(|s| s.iter().map(|&x| x as f32)).collect();
    (
        FeatureSequence::new(frames, d, data).expect("consistent frame layout"),
        ClipFeatureSet::new(d, clip).expect("six streams"),
    )
}

/// The three template expressions of one record.
pub fn describe(latent: &LatentPair, config: &WorldConfig) -> Vec<String> {
    let m = latent.main;
    let (mc, mk) = (&config.colors[m.color], &config.classes[m.class]);
    let motion = &config.motions[m.motion];
    let rel = &config.relations[latent.relation];
    let (cc, ck) = (&config.colors[latent.context_color], &config.classes[latent.context_class]);
    vec![
        format!("the {mc} {mk} {motion} {rel} the {cc} {ck}"),
        format!("a {mc} {mk} {motion} {rel} a {cc} {ck}"),
        format!("the {mc} {mk} which is {motion} {rel} the {cc} {ck}"),
    ]
    .into_iter()
    .map(|s| s.to_lowercase())
    .collect()
}

/// Generated corpus held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub config: WorldConfig,
    pub records: Vec<PairRecord>,
    pub latents: Vec<LatentPair>,
    pub frames: Vec<FeatureSequence<f32>>,
    pub clips: Vec<ClipFeatureSet<f32>>,
    pub vocab: Vocabulary,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";

fn video_latents(config: &WorldConfig, video: usize) -> Vec<LatentPair> {
    let mut rng = rng_for(config.seed, &format!("synth-video-{video}-latents"));
    let mut looks: Vec<(usize, usize)> = (0..config.classes.len())
        .flat_map(|c| (0..config.colors.len()).map(move |k| (c, k)))
        .collect();
    looks.shuffle(&mut rng);
    let objects: Vec<ObjectLatent> = looks[..config.objects_per_video()]
        .iter()
        .map(|&(class, color)| ObjectLatent {
            class,
            color,
            motion: rng.random_range(0..config.motions.len()),
        })
        .collect();
    let mut out = Vec::with_capacity(config.pairs_per_video);
    for r in 0..config.pairs_per_video {
        let (a, b) = (objects[2 * (r / 2)], objects[2 * (r / 2) + 1]);
        let (main, ctx) = if r % 2 == 0 { (a, b) } else { (b, a) };
        out.push(LatentPair {
            main,
            context_class: ctx.class,
            context_color: ctx.color,
            relation: rng.random_range(0..config.relations.len()),
        });
    }
    out
}

pub fn generate_synthetic_dataset(config: &WorldConfig) -> Result<SyntheticDataset> {
    config.validate()?;
    let proj = Projections::new(config);
    let n = config.video_count * config.pairs_per_video;
    let splits = split_dataset(n, config.split_ratios, config.seed)?;
    let mut ds = SyntheticDataset {
        config: config.clone(),
        records: Vec::with_capacity(n),
        latents: Vec::with_capacity(n),
        frames: Vec::with_capacity(n),
        clips: Vec::with_capacity(n),
        vocab: build_vocabulary::<&str, &str>(&[], &[]),
    };
    for v in 0..config.video_count {
        let video_id = format!("video{v:03}");
        let mut rng = rng_for(config.seed, &format!("synth-video-{v}-render"));
        for (r, latent) in video_latents(config, v).into_iter().enumerate() {
            let frames = rng.random_range(config.min_frames..=config.max_frames);
            let (fs, clip) = render_pair(&latent, frames, &proj, config.noise_std, &mut rng);
            let direction = if r % 2 == 0 { Direction::Straight } else { Direction::Reverse };
            let pair_id = format!("{video_id}_p{}_{}", r / 2, if r % 2 == 0 { "s" } else { "r" });
            let idx = ds.records.len();
            ds.records.push(PairRecord {
                video_id: video_id.clone(),
                feature_path: format!("features/{pair_id}.vrft"),
                clip_feature_path: format!("clip/{pair_id}.vrft"),
                pair_id,
                direction,
                frame_count: frames,
                refexps: describe(&latent, config),
                split: splits[idx],
            });
            ds.latents.push(latent);
            ds.frames.push(fs);
            ds.clips.push(clip);
        }
    }
    let train: Vec<&str> = ds
        .records
        .iter()
        .filter(|r| r.split == Split::Train)
        .flat_map(|r| r.refexps.iter().map(String::as_str))
        .collect();
    ds.vocab = build_vocabulary(&train, &config.template_words());
    Ok(ds)
}

impl SyntheticDataset {
    /// Writes features, clip features, the vocabulary and finally the manifest.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir.join("features"))?;
        std::fs::create_dir_all(dir.join("clip"))?;
        for ((rec, fs), clip) in self.records.iter().zip(&self.frames).zip(&self.clips) {
            fs.save(&dir.join(&rec.feature_path))?;
            clip.save(&dir.join(&rec.clip_feature_path))?;
        }
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        let manifest = dir.join(MANIFEST_FILE);
        write_manifest(&self.records, &manifest)?;
        Ok(manifest)
    }

    /// The same corpus without touching the filesystem.
    pub fn to_corpus<T: crate::Scalar>(&self) -> Corpus<T> {
        Corpus {
            root: PathBuf::new(),
            pairs: self
                .records
                .iter()
                .zip(&self.frames)
                .zip(&self.clips)
                .map(|((record, fs), clip)| PairData {
                    record: record.clone(),
                    frames: fs.cast(),
                    clip: clip.cast(),
                })
                .collect(),
        }
    }
}

pub fn write_synthetic_dataset(config: &WorldConfig, dir: &Path) -> Result<SyntheticDataset> {
    let ds = generate_synthetic_dataset(config)?;
    ds.write(dir)?;
    Ok(ds)
}
