use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::RunConfig;
use super::{Command, Common};
use crate::data::{encode_refexp, load_embeddings, tokenize, Corpus, Split, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::{
    generation_report, generation_table, retrieval_metrics, retrieval_table, timing_table, GenerationReport, RetrievalReport,
    TimingRow,
};
use crate::models::{tiny_gradient_check, Model, ModelVariant};
use crate::synth::write_synthetic_dataset;
use crate::tasks::{comprehension_queries, run_comprehension, run_generation, train, GeneratedItem, Query, RankedRetrieval};

/// Finite-difference step and pass threshold of `gradcheck`.
pub const GRADCHECK_EPSILON: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

pub const GENERATION_TSV: &str = "generation.tsv";
pub const RETRIEVAL_TSV: &str = "retrieval.tsv";
pub const TIMING_TSV: &str = "timing.tsv";

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(v) = common.variant {
        cfg.variant = v;
    }
    let cfg = cfg.resolved();
    cfg.validate()?;
    Ok(cfg)
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

fn check_decoding(common: &Common) -> Result<()> {
    if common.beam == 0 {
        return Err(Error::Config("--beam must be at least 1".into()));
    }
    if common.max_len == 0 {
        return Err(Error::Config("--max-len must be at least 1".into()));
    }
    Ok(())
}

fn checkpoint_path(cfg: &RunConfig, common: &Common) -> PathBuf {
    common.checkpoint.clone().unwrap_or_else(|| cfg.paths.checkpoint.clone())
}

fn load_data(cfg: &RunConfig) -> Result<(Vocabulary, Corpus<f32>)> {
    let manifest = cfg.paths.manifest();
    let vocab_path = cfg.paths.vocab();
    require(&manifest)?;
    require(&vocab_path)?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let corpus = Corpus::load(&manifest)?;
    let Some(first) = corpus.pairs.first() else {
        return Err(Error::Empty(format!("{} lists no pairs", manifest.display())));
    };
    let dim = first.frames.dim();
    if let Some(p) = corpus.pairs.iter().find(|p| p.frames.dim() != dim || p.clip.dim() != dim) {
        return Err(Error::Config(format!("{}: feature dim differs from {dim}", p.record.pair_id)));
    }
    Ok((vocab, corpus))
}

/// Checkpoint, vocabulary and corpus for the inference commands, checked
/// against each other.
fn load_trained(cfg: &RunConfig, common: &Common) -> Result<(Model<f32>, Vocabulary, Corpus<f32>)> {
    let ckpt = checkpoint_path(cfg, common);
    require(&ckpt)?;
    let (vocab, corpus) = load_data(cfg)?;
    let model = Model::<f32>::load(&ckpt)?;
    if let Some(v) = common.variant.filter(|&v| v != model.variant()) {
        return Err(Error::Config(format!("--variant {v} but checkpoint holds {}", model.variant())));
    }
    if model.config().vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "checkpoint vocabulary has {} entries, {} has {}",
            model.config().vocab_size,
            cfg.paths.vocab().display(),
            vocab.len()
        )));
    }
    let dim = corpus.pairs[0].frames.dim();
    if model.config().stream_dim != dim {
        return Err(Error::Config(format!("checkpoint expects stream dim {}, corpus has {dim}", model.config().stream_dim)));
    }
    Ok((model, vocab, corpus))
}

fn report_dir(cfg: &RunConfig, common: &Common) -> PathBuf {
    common.out.clone().unwrap_or_else(|| cfg.paths.report_dir.clone())
}

fn write_jsonl<S: serde::Serialize>(items: impl IntoIterator<Item = S>, path: &Path) -> Result<()> {
    let mut s = String::new();
    for it in items {
        s.push_str(&serde_json::to_string(&it)?);
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn print_json(out: &mut dyn Write, v: serde_json::Value) -> Result<()> {
    writeln!(out, "{v}")?;
    Ok(())
}

pub fn run_command(command: &Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Synth { common } => synth(common, out),
        Command::Train { common } => train_cmd(common, out),
        Command::Generate { common, pairs } => generate_cmd(common, pairs, out),
        Command::Comprehend { common, queries } => comprehend_cmd(common, queries.as_deref(), out),
        Command::Evaluate { common } => evaluate_cmd(common, out),
        Command::Gradcheck { common, layers } => gradcheck_cmd(common, *layers, out),
    }
}

fn synth(common: &Common, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = common.out.clone().unwrap_or_else(|| cfg.paths.data_dir.clone());
    let ds = write_synthetic_dataset(&cfg.world, &dir)?;
    print_json(
        out,
        serde_json::json!({
            "command": "synth",
            "dir": dir,
            "pairs": ds.records.len(),
            "vocab_size": ds.vocab.len(),
        }),
    )
}

fn train_cmd(common: &Common, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(common)?;
    let ckpt = match (&common.checkpoint, &common.out) {
        (Some(c), _) => c.clone(),
        (None, Some(o)) => o.join("model.vrfc"),
        (None, None) => cfg.paths.checkpoint.clone(),
    };
    if let Some(e) = &cfg.paths.embeddings {
        require(e)?;
    }
    let (vocab, corpus) = load_data(&cfg)?;
    let mc = cfg.model.model_config(corpus.pairs[0].frames.dim(), vocab.len());
    mc.validate()?;
    let mut model = Model::<f32>::new(cfg.variant, mc, cfg.seed)?;
    if let Some(e) = &cfg.paths.embeddings {
        model.set_embeddings(&load_embeddings(e, &vocab, cfg.model.embed_dim, cfg.seed)?)?;
    }
    let tr = corpus.examples(Split::Train, &vocab, cfg.train.max_len)?;
    let va = corpus.examples(Split::Val, &vocab, cfg.train.max_len)?;
    let t0 = Instant::now();
    let outcome = train(&mut model, &corpus, &tr, &va, &vocab, &cfg.train)?;
    let dir = ckpt.parent().map(Path::to_path_buf).unwrap_or_default();
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(&dir)?;
    }
    model.save(&ckpt)?;
    outcome.history.write(&dir)?;
    print_json(
        out,
        serde_json::json!({
            "command": "train",
            "variant": model.variant().name(),
            "checkpoint": ckpt,
            "params": model.param_count(),
            "epochs": outcome.epochs_run,
            "steps": outcome.steps,
            "best_epoch": outcome.best_epoch,
            "best_val_loss": outcome.best_val,
            "seconds": t0.elapsed().as_secs_f64(),
        }),
    )
}

fn pair_indices(corpus: &Corpus<f32>, ids: &[String]) -> Result<Vec<usize>> {
    if ids.is_empty() {
        return Ok(corpus.indices(Split::Test));
    }
    let index: BTreeMap<&str, usize> = corpus.pairs.iter().enumerate().map(|(i, p)| (p.record.pair_id.as_str(), i)).collect();
    let missing: Vec<String> = ids.iter().filter(|id| !index.contains_key(id.as_str())).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::KeyMismatch(missing));
    }
    Ok(ids.iter().map(|id| index[id.as_str()]).collect())
}

fn generated_text(items: &[GeneratedItem]) -> String {
    items.iter().map(|g| format!("{}\t{}\n", g.pair_id, g.text)).collect()
}

fn generate_cmd(common: &Common, pairs: &[String], out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(common)?;
    check_decoding(common)?;
    let (model, vocab, corpus) = load_trained(&cfg, common)?;
    let idx = pair_indices(&corpus, pairs)?;
    let items = run_generation(&model, &corpus, &idx, &vocab, common.beam, common.max_len)?;
    let dir = report_dir(&cfg, common);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("generated.txt"), generated_text(&items))?;
    write_jsonl(&items, &dir.join("generated.jsonl"))?;
    print_json(out, serde_json::json!({ "command": "generate", "dir": dir, "items": items.len() }))
}

/// `pair_id<TAB>expression` lines; blank lines and `#` comments are skipped.
fn read_queries(path: &Path, corpus: &Corpus<f32>, vocab: &Vocabulary) -> Result<Vec<Query>> {
    require(path)?;
    let text = std::fs::read_to_string(path)?;
    let index: BTreeMap<&str, usize> = corpus.pairs.iter().enumerate().map(|(i, p)| (p.record.pair_id.as_str(), i)).collect();
    let mut queries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parse = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            msg: msg.to_string(),
        };
        let (id, re) = line.split_once('\t').ok_or_else(|| parse("expected pair_id<TAB>expression"))?;
        let &pair = index.get(id.trim()).ok_or_else(|| parse(&format!("unknown pair {id:?}")))?;
        if tokenize(re).is_empty() {
            return Err(parse("empty expression"));
        }
        queries.push(Query {
            pair,
            text: re.trim().to_string(),
            tokens: encode_refexp(re, vocab)?,
        });
    }
    Ok(queries)
}

fn ranks_of(results: &[(RankedRetrieval, f64)]) -> Result<Vec<usize>> {
    results
        .iter()
        .map(|(r, _)| r.rank.ok_or_else(|| Error::Contract(format!("no rank for query {:?}", r.query))))
        .collect()
}

fn comprehend_cmd(common: &Common, queries: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(common)?;
    if let Some(q) = queries {
        require(q)?;
    }
    let (model, vocab, corpus) = load_trained(&cfg, common)?;
    let qs = match queries {
        Some(p) => read_queries(p, &corpus, &vocab)?,
        None => comprehension_queries(&corpus, &corpus.indices(Split::Test), &vocab, common.max_len)?,
    };
    if qs.is_empty() {
        return Err(Error::Empty("no comprehension queries".into()));
    }
    let results = run_comprehension(&model, &corpus, &qs)?;
    let dir = report_dir(&cfg, common);
    std::fs::create_dir_all(&dir)?;
    write_jsonl(results.iter().map(|r| &r.0), &dir.join("retrieval.jsonl"))?;
    let report = retrieval_metrics(&ranks_of(&results)?)?;
    print_json(
        out,
        serde_json::json!({
            "command": "comprehend",
            "dir": dir,
            "queries": results.len(),
            "map": report.map,
            "rank1": report.rank1,
        }),
    )
}

/// Everything `evaluate` produces for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub generation: GenerationReport,
    pub retrieval: RetrievalReport,
    pub timing: TimingRow,
    pub generated: Vec<GeneratedItem>,
    pub rankings: Vec<RankedRetrieval>,
}

/// Generation and comprehension over the test split.
pub fn evaluate_model(model: &Model<f32>, corpus: &Corpus<f32>, vocab: &Vocabulary, beam: usize, max_len: usize) -> Result<Evaluation> {
    let test = corpus.indices(Split::Test);
    let generated = run_generation(model, corpus, &test, vocab, beam, max_len)?;
    let cands: BTreeMap<String, Vec<String>> = generated.iter().map(|g| (g.pair_id.clone(), g.candidate_tokens())).collect();
    let refs: BTreeMap<String, Vec<Vec<String>>> = generated.iter().map(|g| (g.pair_id.clone(), g.reference_tokens())).collect();
    let generation = generation_report(&cands, &refs, vocab)?;
    generation.check_invariants(vocab.len())?;

    let queries = comprehension_queries(corpus, &test, vocab, max_len)?;
    let results = run_comprehension(model, corpus, &queries)?;
    let retrieval = retrieval_metrics(&ranks_of(&results)?)?;
    retrieval.check_invariants()?;

    let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| xs.sum::<f64>() / n.max(1) as f64;
    let timing = TimingRow {
        num_params: model.param_count(),
        generation_sec: mean(&mut generated.iter().map(|g| g.seconds), generated.len()),
        comprehension_sec: mean(&mut results.iter().map(|r| r.1), results.len()),
    };
    Ok(Evaluation {
        generation,
        retrieval,
        timing,
        generated,
        rankings: results.into_iter().map(|r| r.0).collect(),
    })
}

impl Evaluation {
    /// Tables, per-item records and report JSON. Only `timing.tsv` varies
    /// between identical runs.
    pub fn write(&self, label: &str, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(GENERATION_TSV), generation_table(&[(label, &self.generation)]))?;
        std::fs::write(dir.join(RETRIEVAL_TSV), retrieval_table(&[(label, &self.retrieval)]))?;
        std::fs::write(dir.join(TIMING_TSV), timing_table(&[(label, &self.timing)]))?;
        std::fs::write(dir.join("generated.txt"), generated_text(&self.generated))?;
        write_jsonl(&self.generated, &dir.join("generated.jsonl"))?;
        write_jsonl(&self.rankings, &dir.join("retrieval.jsonl"))?;
        std::fs::write(dir.join("generation_report.json"), serde_json::to_string_pretty(&self.generation)?)?;
        std::fs::write(dir.join("retrieval_report.json"), serde_json::to_string_pretty(&self.retrieval)?)?;
        Ok(())
    }
}

fn evaluate_cmd(common: &Common, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(common)?;
    check_decoding(common)?;
    let (model, vocab, corpus) = load_trained(&cfg, common)?;
    let ev = evaluate_model(&model, &corpus, &vocab, common.beam, common.max_len)?;
    let dir = report_dir(&cfg, common);
    ev.write(model.variant().label(), &dir)?;
    print_json(
        out,
        serde_json::json!({
            "command": "evaluate",
            "variant": model.variant().name(),
            "dir": dir,
            "avg_bleu4": ev.generation.avg_bleu4,
            "distinct_words": ev.generation.distinct_words,
            "map": ev.retrieval.map,
            "rank1": ev.retrieval.rank1,
            "rank2": ev.retrieval.rank2,
            "rank3": ev.retrieval.rank3,
        }),
    )
}

fn gradcheck_cmd(common: &Common, layers: usize, out: &mut dyn Write) -> Result<()> {
    let seed = match &common.config {
        Some(_) => load_config(common)?.seed,
        None => common.seed.unwrap_or(0),
    };
    if layers == 0 {
        return Err(Error::Config("--layers must be at least 1".into()));
    }
    let variants: Vec<ModelVariant> = match common.variant {
        Some(v) => vec![v],
        None => ModelVariant::ALL.to_vec(),
    };
    let mut worst: f64 = 0.0;
    for v in variants {
        let t0 = Instant::now();
        let r = tiny_gradient_check(v, layers, seed, GRADCHECK_EPSILON)?;
        worst = worst.max(r.max_rel_error);
        print_json(
            out,
            serde_json::json!({
                "command": "gradcheck",
                "variant": v.name(),
                "layers": layers,
                "coordinates": r.coordinates,
                "max_rel_error": r.max_rel_error,
                "worst_param": format!("{}[{}]", r.worst_param, r.worst_index),
                "max_abs_error": r.max_abs_error(),
                "fd_resolution": r.resolution(GRADCHECK_EPSILON),
                "seconds": t0.elapsed().as_secs_f64(),
            }),
        )?;
    }
    if worst >= GRADCHECK_TOLERANCE {
        return Err(Error::Contract(format!(
            "gradient check failed: max relative error {worst:e} >= {GRADCHECK_TOLERANCE:e}"
        )));
    }
    Ok(())
}
