//! Acceptance run, without the libtest harness so its output is never
//! captured. Each criterion prints one `PASS`/`FAIL` line with its measured
//! values; the process fails if any criterion not listed in `KNOWN_FAILING`
//! fails.

mod common;

use std::collections::BTreeMap;
use std::time::Instant;

use common::oracle;
use rand::Rng;
use viref::cli::run;
use viref::data::{ClipFeatureSet, FeatureSequence, Split, TokenSequence, CLIP_STREAMS, FRAME_STREAMS};
use viref::metrics::{bleu4, retrieval_metrics, RetrievalReport};
use viref::models::{tiny_gradient_check, Features, Model, ModelVariant, Session, VirefConfig};
use viref::seed::rng_for;
use viref::synth::{generate_synthetic_dataset, WorldConfig};
use viref::tasks::{evaluate_loss, generate, run_generation, train, TrainConfig};

/// Criteria that cannot be met as stated. Criterion 1 asks for relative error
/// below 1e-5 on every coordinate, but with a step of 1e-5 central
/// differences of an O(1) loss carry ~3e-11 absolute noise, which exceeds
/// 1e-5 relative for any gradient smaller than a few 1e-6; the tiny models
/// have hundreds of such coordinates.
const KNOWN_FAILING: &[usize] = &[1];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn criterion_1() -> Outcome {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    let mut runs = Vec::new();
    for v in ModelVariant::ALL {
        runs.push((v, 2, tiny_gradient_check(v, 2, 0, 1e-5).unwrap()));
    }
    runs.push((ModelVariant::Viref, 6, tiny_gradient_check(ModelVariant::Viref, 6, 0, 1e-5).unwrap()));
    for (v, layers, r) in &runs {
        worst = worst.max(r.max_rel_error);
        parts.push(format!(
            "{v}/L{layers}: rel {:.1e}, rel(|g|>=1e-5) {:.1e}, {} of {} coords > 1e-5, abs {:.1e} vs fd floor {:.1e}",
            r.max_rel_error,
            r.max_rel_error_above(1e-5),
            r.count_above(1e-5),
            r.coordinates,
            r.max_abs_error(),
            r.resolution(1e-5)
        ));
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(worst < 1e-5 && secs < 60.0, format!("max rel error {worst:.2e}, {secs:.1}s; {}", parts.join("; ")))
}

fn random_features(frames: usize, dim: usize, scale: f64, seed: u64) -> (FeatureSequence<f64>, ClipFeatureSet<f64>) {
    let mut rng = rng_for(seed, "acceptance-features");
    let mut draw = |n: usize| (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    (
        FeatureSequence::new(frames, dim, draw(frames * FRAME_STREAMS * dim)).unwrap(),
        ClipFeatureSet::new(dim, draw(CLIP_STREAMS * dim)).unwrap(),
    )
}

fn is_distribution(p: &[f64]) -> bool {
    p.iter().all(|&x| x >= 0.0) && (p.iter().sum::<f64>() - 1.0).abs() <= 1e-6
}

fn criterion_2() -> Outcome {
    let mut rng = rng_for(2, "acceptance-configs");
    let (mut dists, mut attns, mut bad) = (0usize, 0usize, Vec::new());
    for case in 0..1000u64 {
        let variant = ModelVariant::ALL[rng.random_range(0..3)];
        let layers = rng.random_range(1..=3);
        let h = rng.random_range(2..=10);
        let d = rng.random_range(1..=5);
        let n = rng.random_range(5..=15);
        let e = rng.random_range(1..=5);
        let mut m = Model::<f64>::new(variant, VirefConfig::with_dims(layers, h, d, n, e), case).unwrap();
        let gain = rng.random_range(0.5..4.0);
        for p in m.params_mut().iter_mut() {
            p.tensor.data_mut().iter_mut().for_each(|x| *x *= gain);
        }
        let (frames, clip) = random_features(rng.random_range(1..=5), d, rng.random_range(0.1..5.0), case);
        let f = Features { frames: Some(&frames), clip: Some(&clip) };
        let mut s = Session::new(&m, f).unwrap();
        let mut state = s.init().unwrap();
        let mut word = 0;
        for _ in 0..rng.random_range(1..=5) {
            let out = s.step(word, &state).unwrap();
            dists += 1;
            if !is_distribution(&out.probs()) {
                bad.push(format!("case {case} step distribution"));
            }
            if let Some(a) = &out.attention {
                attns += 1;
                if !is_distribution(a.as_slice()) {
                    bad.push(format!("case {case} attention {:?}", a.as_slice()));
                }
            }
            state = out.state;
            word = rng.random_range(0..n);
        }
        if variant == ModelVariant::Viref {
            attns += 1;
            if !is_distribution(m.initial_attention().unwrap().as_slice()) {
                bad.push(format!("case {case} initial attention"));
            }
        }
    }
    outcome(bad.is_empty(), format!("{dists} word distributions, {attns} attention vectors, {} violations {:?}", bad.len(), bad.iter().take(3).collect::<Vec<_>>()))
}

/// Brute force over every token string of up to `max_len` tokens, scored by
/// teacher forcing rather than the stepping decoder.
fn exhaustive_best(m: &Model<f64>, f: Features<'_, f64>, max_len: usize) -> f64 {
    let n = m.config().vocab_size;
    let mut best = f64::NEG_INFINITY;
    let mut stack = vec![vec![0usize]];
    while let Some(seq) = stack.pop() {
        if seq.len() > 1 && *seq.last().unwrap() == 1 {
            best = best.max(m.score_ids(f, &seq).unwrap().log_prob);
            continue;
        }
        if seq.len() > max_len {
            continue;
        }
        for w in 0..n {
            let mut s = seq.clone();
            s.push(w);
            stack.push(s);
        }
    }
    best
}

fn criterion_3() -> Outcome {
    let (mut max_gap, mut narrow_over, mut unfinished) = (0.0f64, 0usize, 0usize);
    for seed in 0..20u64 {
        let variant = ModelVariant::ALL[seed as usize % 3];
        let mut m = Model::<f64>::new(variant, VirefConfig::with_dims(2, 8, 4, 5, 4), 100 + seed).unwrap();
        for p in m.params_mut().iter_mut().filter(|p| p.name.starts_with("wen.fc2")) {
            p.tensor.data_mut().iter_mut().for_each(|x| *x *= 10.0);
        }
        let (frames, clip) = random_features(3, 4, 1.0, seed);
        let f = Features { frames: Some(&frames), clip: Some(&clip) };
        let best = exhaustive_best(&m, f, 4);
        let wide = generate(&m, f, 0, 1, 625, 4).unwrap();
        if !wide.finished {
            unfinished += 1;
        }
        max_gap = max_gap.max((wide.log_prob - best).abs());
        let narrow = generate(&m, f, 0, 1, 3, 4).unwrap();
        if narrow.finished && narrow.log_prob > best + 1e-12 {
            narrow_over += 1;
        }
    }
    outcome(
        max_gap <= 1e-9 && narrow_over == 0 && unfinished == 0,
        format!("20 models: max |beam625 - exhaustive| = {max_gap:.1e}, beam3 above optimum {narrow_over}x"),
    )
}

fn criterion_4() -> Outcome {
    let t0 = Instant::now();
    let ds = generate_synthetic_dataset(&WorldConfig::default()).unwrap();
    let corpus = ds.to_corpus::<f64>();
    let examples: Vec<_> = corpus.examples(Split::Train, &ds.vocab, 25).unwrap();
    // One expression for each of the first eight pairs.
    let mut seen = std::collections::BTreeSet::new();
    let eight: Vec<_> = examples.into_iter().filter(|e| seen.insert(e.pair)).take(8).collect();
    let cfg = VirefConfig::with_dims(2, 32, ds.config.stream_dim, ds.vocab.len(), 16);
    let mut m = Model::<f64>::new(ModelVariant::Viref, cfg, 4).unwrap();
    let tc = TrainConfig {
        lr: 3e-3,
        batch_size: 8,
        max_epochs: 2000,
        patience: 2000,
        max_steps: Some(2000),
        dropout: false,
        seed: 4,
        ..TrainConfig::default()
    };
    let out = train(&mut m, &corpus, &eight, &eight, &ds.vocab, &tc).unwrap();
    let ce = evaluate_loss(&m, &corpus, &eight).unwrap();
    let first_below = out.history.val.iter().position(|&v| v < 0.05).map(|i| i + 1);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        ce < 0.05 && out.steps <= 2000 && secs < 300.0,
        format!("per-token CE {ce:.4} after {} steps (first < 0.05 at step {first_below:?}), {secs:.1}s", out.steps),
    )
}

fn parse_tsv_row(text: &str) -> Vec<String> {
    text.lines().nth(1).unwrap_or("").split('\t').map(str::to_string).collect()
}

struct DeskRun {
    secs: f64,
    retrieval: BTreeMap<ModelVariant, Vec<String>>,
    generation: BTreeMap<ModelVariant, Vec<String>>,
    vocab_size: usize,
    errors: Vec<String>,
}

fn desk_pipeline() -> DeskRun {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let call = |args: Vec<String>| {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(std::iter::once("viref".to_string()).chain(args), &mut out, &mut err);
        (code, String::from_utf8_lossy(&err).into_owned())
    };
    let s = |x: &str| x.to_string();
    let mut errors = Vec::new();
    let (code, err) = call(vec![s("synth"), s("--out"), data.display().to_string()]);
    if code != 0 {
        errors.push(err);
    }
    let cfg = dir.path().join("desk.toml");
    std::fs::write(&cfg, format!("[paths]\ndata_dir = {:?}\n", data.display().to_string())).unwrap();
    let mut run = DeskRun {
        secs: 0.0,
        retrieval: BTreeMap::new(),
        generation: BTreeMap::new(),
        vocab_size: std::fs::read_to_string(data.join("vocab.txt")).map(|t| t.lines().count()).unwrap_or(0),
        errors,
    };
    for v in ModelVariant::ALL {
        let vd = dir.path().join(v.name());
        let ckpt = vd.join("model.vrfc").display().to_string();
        let reports = vd.join("reports");
        let base = vec![s("--config"), cfg.display().to_string(), s("--variant"), s(v.name()), s("--checkpoint"), ckpt];
        let (code, err) = call([vec![s("train")], base.clone()].concat());
        if code != 0 {
            run.errors.push(format!("{v} train: {err}"));
            continue;
        }
        let (code, err) = call([vec![s("evaluate")], base, vec![s("--out"), reports.display().to_string()]].concat());
        if code != 0 {
            run.errors.push(format!("{v} evaluate: {err}"));
            continue;
        }
        for f in ["generation.tsv", "retrieval.tsv", "timing.tsv"] {
            if !reports.join(f).exists() {
                run.errors.push(format!("{v}: {f} missing"));
            }
        }
        let read = |f: &str| std::fs::read_to_string(reports.join(f)).unwrap_or_default();
        run.retrieval.insert(v, parse_tsv_row(&read("retrieval.tsv")));
        run.generation.insert(v, parse_tsv_row(&read("generation.tsv")));
    }
    run.secs = t0.elapsed().as_secs_f64();
    run
}

fn criterion_5(desk: &DeskRun) -> Outcome {
    let rank1 = desk
        .retrieval
        .get(&ModelVariant::Viref)
        .and_then(|r| r.get(2))
        .and_then(|x| x.parse::<f64>().ok())
        .unwrap_or(0.0);
    let complete = desk.retrieval.len() == 3 && desk.generation.len() == 3;
    let rows: Vec<String> = desk.retrieval.iter().map(|(v, r)| format!("{}: {}", v.label(), r[1..].join("/"))).collect();
    outcome(
        rank1 >= 0.60 && complete && desk.errors.is_empty() && desk.secs < 900.0,
        format!("VIREF rank-1 {rank1:.3} (chance 0.20); mAP/r1/r2/r3 {}; {:.0}s; errors {:?}", rows.join(", "), desk.secs, desk.errors),
    )
}

fn criterion_6() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let tok = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let worked = bleu4(&tok("the red car parked"), &[tok("the red car parked near")]).unwrap();
    let mut ok = (worked - (-0.25f64).exp()).abs() < 1e-9 && (worked - 0.7788).abs() < 5e-5;
    ok &= bleu4(&tok("a b c d e"), &[tok("a b c d e")]).unwrap() == 1.0;
    ok &= bleu4(&tok("a b c d e"), &[tok("e d c b a")]).unwrap() == 0.0;
    let r = retrieval_metrics(&[1, 2, 4]).unwrap();
    ok &= (r.map - 1.75 / 3.0).abs() < 1e-9 && (r.rank1 - 1.0 / 3.0).abs() < 1e-9 && (r.rank2 - 2.0 / 3.0).abs() < 1e-9 && (r.rank3 - 2.0 / 3.0).abs() < 1e-9;
    let r = retrieval_metrics(&[1, 1, 1]).unwrap();
    ok &= r.map == 1.0 && r.rank3 == 1.0;

    let mut rng = rng_for(6, "acceptance-metrics");
    let mut positive = 0;
    for _ in 0..120 {
        let mut sent = |n: usize| (0..n).map(|_| ["x", "y"][rng.random_range(0..2)].to_string()).collect::<Vec<_>>();
        let c = sent(4 + cases % 5);
        let refs: Vec<Vec<String>> = (0..1 + cases % 3).map(|i| sent(3 + (cases + i) % 5)).collect();
        let want = oracle::bleu4(&c, &refs);
        worst = worst.max((bleu4(&c, &refs).unwrap() - want).abs());
        if want > 0.0 {
            positive += 1;
        }
        let ranks: Vec<usize> = (0..1 + cases % 7).map(|_| rng.random_range(1..6)).collect();
        let (map, acc) = oracle::retrieval(&ranks);
        let got = retrieval_metrics(&ranks).unwrap();
        for (a, b) in [(got.map, map), (got.rank1, acc[0]), (got.rank2, acc[1]), (got.rank3, acc[2])] {
            worst = worst.max((a - b).abs());
        }
        cases += 1;
    }
    outcome(
        ok && worst <= 1e-9 && positive >= 20,
        format!("worked examples {}, {cases} random cases ({positive} with BLEU > 0), max deviation {worst:.1e}", if ok { "match" } else { "MISMATCH" }),
    )
}

fn criterion_7(desk: &DeskRun) -> Outcome {
    let mut problems = Vec::new();
    for (v, row) in &desk.retrieval {
        let vals: Vec<f64> = row[1..].iter().filter_map(|x| x.parse().ok()).collect();
        if vals.len() != 4 {
            problems.push(format!("{v}: unparsable row {row:?}"));
            continue;
        }
        let r = RetrievalReport {
            map: vals[0],
            rank1: vals[1],
            rank2: vals[2],
            rank3: vals[3],
            ranks: vec![],
        };
        if let Err(e) = r.check_invariants() {
            problems.push(format!("{v}: {e}"));
        }
    }
    for (v, row) in &desk.generation {
        let bleu: f64 = row.get(1).and_then(|x| x.parse().ok()).unwrap_or(-1.0);
        let distinct: usize = row.get(3).and_then(|x| x.parse().ok()).unwrap_or(usize::MAX);
        if !(0.0..=1.0).contains(&bleu) || distinct > desk.vocab_size {
            problems.push(format!("{v}: generation row {row:?}"));
        }
    }
    let reports = desk.retrieval.len() + desk.generation.len();
    outcome(problems.is_empty() && reports == 6, format!("{reports} reports checked; problems {problems:?}"))
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let dir = tempfile::tempdir().unwrap();
    let world = WorldConfig {
        video_count: 6,
        stream_dim: 16,
        ..WorldConfig::default()
    };
    let ds = generate_synthetic_dataset(&world).unwrap();
    let corpus = ds.to_corpus::<f32>();
    let tr = corpus.examples(Split::Train, &ds.vocab, 25).unwrap();
    let va = corpus.examples(Split::Val, &ds.vocab, 25).unwrap();
    let test = corpus.indices(Split::Test);
    let once = || {
        let mut m = Model::<f32>::new(ModelVariant::Viref, VirefConfig::with_dims(1, 12, 16, ds.vocab.len(), 6), 8).unwrap();
        let tc = TrainConfig {
            lr: 3e-3,
            max_epochs: 3,
            seed: 8,
            ..TrainConfig::default()
        };
        let out = train(&mut m, &corpus, &tr, &va, &ds.vocab, &tc).unwrap();
        let gen: Vec<String> = run_generation(&m, &corpus, &test, &ds.vocab, 3, 25).unwrap().into_iter().map(|g| g.text).collect();
        (m, out.history, gen)
    };
    let (m1, h1, g1) = once();
    let (_, h2, g2) = once();
    let same_history = h1 == h2;
    let same_gen = g1 == g2;
    notes.push(format!("loss history identical {same_history} ({} epochs), generated REs identical {same_gen} ({})", h1.val.len(), g1.len()));

    let a = dir.path().join("a.vrfc");
    let b = dir.path().join("b.vrfc");
    m1.save(&a).unwrap();
    let loaded = Model::<f32>::load(&a).unwrap();
    loaded.save(&b).unwrap();
    let bytes_equal = std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap();
    let params_equal = loaded.params() == m1.params();
    notes.push(format!("checkpoint round trip byte-exact {bytes_equal}, params equal {params_equal}"));

    let m = Model::<f64>::new(ModelVariant::Viref, VirefConfig::with_dims(2, 8, 16, ds.vocab.len(), 4), 1).unwrap();
    let pair = &ds.to_corpus::<f64>().pairs[0];
    let mut counts_ok = true;
    for n in 1..=6usize {
        let words: Vec<usize> = (0..n).map(|i| 4 + i % (ds.vocab.len() - 4)).collect();
        let seq = TokenSequence::from_words(&words, &ds.vocab).unwrap();
        let runs = m.score_sequence(Features::from(pair), &seq).unwrap().encoder_runs;
        // One initial encoding, then one re-run per emitted token (n words and <end>).
        counts_ok &= runs - 1 == n + 1;
    }
    notes.push(format!("encoder re-runs = n+1 for n in 1..=6: {counts_ok}"));
    outcome(same_history && same_gen && bytes_equal && params_equal && counts_ok, notes.join("; "))
}

fn main() {
    let t0 = Instant::now();
    let desk = desk_pipeline();
    let results = vec![
        (1, "gradient fidelity", criterion_1()),
        (2, "probability invariants", criterion_2()),
        (3, "beam vs exhaustive", criterion_3()),
        (4, "overfit sanity", criterion_4()),
        (5, "synthetic learning", criterion_5(&desk)),
        (6, "metric oracles", criterion_6()),
        (7, "report invariants", criterion_7(&desk)),
        (8, "reproducibility and persistence", criterion_8()),
    ];
    for (k, name, o) in &results {
        println!("{} criterion {k} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance total {:.0}s", t0.elapsed().as_secs_f64());
    let unexpected: Vec<usize> = results.iter().filter(|(k, _, o)| !o.pass && !KNOWN_FAILING.contains(k)).map(|r| r.0).collect();
    if !unexpected.is_empty() {
        eprintln!("criteria failed: {unexpected:?}");
        std::process::exit(1);
    }
}
