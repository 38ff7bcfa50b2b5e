use std::path::Path;

use serde_json::Value;
use viref::cli::{run, EXIT_CONFIG, EXIT_DATA, EXIT_MISSING_FILE, EXIT_USAGE};

fn exec(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv: Vec<&str> = std::iter::once("viref").chain(args.iter().copied()).collect();
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn error_code(stderr: &str) -> i64 {
    let v: Value = serde_json::from_str(stderr.trim()).expect("one JSON error line");
    v["error"]["code"].as_i64().unwrap()
}

const SMALL: &str = r#"
seed = 5
variant = "viref"

[world]
video_count = 4
stream_dim = 16

[model]
layers = 1
hidden_dim = 8
embed_dim = 4

[train]
lr = 0.003
max_epochs = 2
"#;

fn write_config(dir: &Path, extra: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("{SMALL}{extra}")).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_two() {
    let (code, _, err) = exec(&["fly"]);
    assert_eq!(code, EXIT_USAGE);
    assert_eq!(error_code(&err), EXIT_USAGE as i64);
    let (code, _, _) = exec(&["train", "--seed", "abc"]);
    assert_eq!(code, EXIT_USAGE);
    let (code, out, _) = exec(&["--help"]);
    assert_eq!(code, 0);
    assert!(out.contains("gradcheck"));
}

#[test]
fn unreadable_or_invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    let (code, _, err) = exec(&["synth", "--config", missing.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    assert_eq!(error_code(&err), EXIT_CONFIG as i64);

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[world]\nstream_dim = 2\n").unwrap();
    let out = dir.path().join("corpus");
    let (code, _, _) = exec(&["synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(!out.exists());

    std::fs::write(&cfg, "[train]\nbatch_size = 0\n").unwrap();
    let (code, _, _) = exec(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn evaluate_without_checkpoint_is_missing_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(exec(&["synth", "--config", &cfg]).0, 0);
    let (code, _, err) = exec(&["evaluate", "--config", &cfg]);
    assert_eq!(code, EXIT_MISSING_FILE);
    assert!(err.contains("model.vrfc"));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn corrupt_feature_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    assert_eq!(exec(&["synth", "--config", &cfg]).0, 0);
    let f = dir.path().join("data/features/video000_p0_s.vrft");
    std::fs::write(&f, b"junk").unwrap();
    let (code, _, err) = exec(&["train", "--config", &cfg]);
    assert_eq!(code, EXIT_DATA, "{err}");
}

#[test]
fn gradcheck_reports_every_variant() {
    let (code, out, err) = exec(&["gradcheck", "--seed", "1"]);
    let lines: Vec<Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    let worst = lines.iter().map(|v| v["max_rel_error"].as_f64().unwrap()).fold(0.0, f64::max);
    // The verdict must agree with the printed numbers either way.
    if worst < 1e-5 {
        assert_eq!(code, 0);
    } else {
        assert_eq!(code, 6);
        assert!(err.contains("gradient check failed"));
    }
    for v in &lines {
        assert!(v["max_abs_error"].as_f64().unwrap() < 1e-8);
    }
    let (code, out, _) = exec(&["gradcheck", "--variant", "viref_e"]);
    assert!(code == 0 || code == 6);
    assert_eq!(out.lines().count(), 1);
}

fn pipeline(dir: &Path) -> (String, String) {
    let cfg = write_config(dir, "");
    assert_eq!(exec(&["synth", "--config", &cfg]).0, 0);
    let (code, out, err) = exec(&["train", "--config", &cfg]);
    assert_eq!(code, 0, "{err}");
    let t: Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(t["epochs"], 2);
    let (code, out, err) = exec(&["evaluate", "--config", &cfg]);
    assert_eq!(code, 0, "{err}");
    let e: Value = serde_json::from_str(out.trim()).unwrap();
    assert!(e["rank1"].as_f64().unwrap() <= e["rank2"].as_f64().unwrap());
    for f in ["generation.tsv", "retrieval.tsv", "timing.tsv"] {
        assert!(dir.join("runs/reports").join(f).exists(), "{f}");
    }
    let read = |p: &str| std::fs::read_to_string(dir.join(p)).unwrap();
    let fixed = ["runs/reports/generation.tsv", "runs/reports/retrieval.tsv", "runs/reports/generated.jsonl", "runs/reports/retrieval.jsonl", "runs/train_loss.txt", "runs/val_loss.txt"]
        .iter()
        .map(|p| read(p))
        .collect::<Vec<_>>()
        .join("\n--\n");
    (fixed, cfg)
}

#[test]
fn pipeline_is_reproducible_and_subcommands_work() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (ra, cfg) = pipeline(a.path());
    let (rb, _) = pipeline(b.path());
    assert_eq!(ra, rb);
    assert_eq!(
        std::fs::read(a.path().join("runs/model.vrfc")).unwrap(),
        std::fs::read(b.path().join("runs/model.vrfc")).unwrap()
    );

    let gen_dir = a.path().join("gen");
    let (code, _, err) = exec(&["generate", "--config", &cfg, "--pairs", "video000_p0_s,video001_p1_r", "--beam", "2", "--out", gen_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(gen_dir.join("generated.txt")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("video000_p0_s\t"));

    let (code, _, err) = exec(&["generate", "--config", &cfg, "--pairs", "nope"]);
    assert_eq!(code, EXIT_DATA);
    assert!(err.contains("nope"));

    let q = a.path().join("queries.tsv");
    std::fs::write(&q, "# pair\texpression\nvideo002_p1_s\tthe red car near the van\n").unwrap();
    let comp_dir = a.path().join("comp");
    let (code, _, err) = exec(&["comprehend", "--config", &cfg, "--queries", q.to_str().unwrap(), "--out", comp_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    let rec: Value = serde_json::from_str(std::fs::read_to_string(comp_dir.join("retrieval.jsonl")).unwrap().trim()).unwrap();
    assert_eq!(rec["ranking"].as_array().unwrap().len(), 5);

    let (code, _, _) = exec(&["evaluate", "--config", &cfg, "--variant", "viref_a"]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn binary_exit_code() {
    let st = std::process::Command::new(env!("CARGO_BIN_EXE_viref")).arg("nonsense").output().unwrap();
    assert_eq!(st.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8_lossy(&st.stderr).contains("\"code\":2"));
}
