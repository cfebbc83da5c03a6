use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn safeplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_safeplan"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const TINY: &str = r#"
seed = 3
robots = 2
obstacles = 1

[env]
max_steps = 40

[train]
episodes = 2
hidden = [8, 8]
minibatch = 16
checkpoint_every = 1

[eval]
episodes = 4
record = 2

[bench]
episodes = 3
obstacles = [0, 1]
"#;

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn trained(dir: &Path) -> (PathBuf, PathBuf) {
    let config = dir.join("tiny.toml");
    std::fs::write(&config, TINY).unwrap();
    let out = dir.join("train");
    ok(&safeplan(&["train", "--config", s(&config), "--out", s(&out)]));
    (config, out)
}

#[test]
fn train_eval_export_bench_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (config, train) = trained(dir.path());
    for f in ["config.toml", "train_log.jsonl", "timing.jsonl", "checkpoint.bin", "checkpoint_000001.bin"] {
        assert!(train.join(f).is_file(), "missing {f}");
    }
    let log = std::fs::read_to_string(train.join("train_log.jsonl")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].contains("\"record\":\"run\""));
    assert!(!log.contains("wall"));

    let ckpt = train.join("checkpoint.bin");
    let eval = dir.path().join("eval");
    ok(&safeplan(&["eval", "--checkpoint", s(&ckpt), "--out", s(&eval)]));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(eval.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["metrics"]["episodes"], 4);
    assert!(metrics["fingerprint"].is_string());

    let export = dir.path().join("export");
    let records = eval.join("episodes.jsonl");
    ok(&safeplan(&["export", s(&records), "--out", s(&export)]));
    let first = std::fs::read(export.join("episode_000.csv")).unwrap();
    assert!(export.join("episode_001.svg").is_file());
    assert!(!export.join("episode_002.csv").exists());
    ok(&safeplan(&["export", s(&records), "--out", s(&export)]));
    assert_eq!(first, std::fs::read(export.join("episode_000.csv")).unwrap());

    let bench = dir.path().join("bench");
    let out = safeplan(&["bench", "--config", s(&config), "--checkpoint", s(&ckpt), "--out", s(&bench)]);
    ok(&out);
    let csv = std::fs::read_to_string(bench.join("bench.csv")).unwrap();
    // Comment, header and three methods for each of two obstacle counts.
    assert_eq!(csv.lines().count(), 2 + 6);
    assert!(String::from_utf8_lossy(&out.stdout).contains("greedy+vo"));
}

#[test]
fn eval_warns_on_foreign_config() {
    let dir = tempfile::tempdir().unwrap();
    let (_, train) = trained(dir.path());
    let other = dir.path().join("other.toml");
    std::fs::write(&other, TINY.replace("seed = 3", "seed = 4")).unwrap();
    let out = safeplan(&[
        "eval",
        "--checkpoint",
        s(&train.join("checkpoint.bin")),
        "--config",
        s(&other),
        "--episodes",
        "2",
        "--out",
        s(&dir.path().join("eval")),
    ]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn bad_inputs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "robots = 0\n").unwrap();
    let out = safeplan(&["train", "--config", s(&bad), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    std::fs::write(&bad, "unknown_key = 1\n").unwrap();
    assert!(!safeplan(&["train", "--config", s(&bad)]).status.success());

    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    assert!(!safeplan(&["eval", "--checkpoint", s(&junk), "--out", s(&dir.path().join("e"))]).status.success());
}

#[test]
fn seed_and_dynamics_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tiny.toml");
    std::fs::write(&config, TINY).unwrap();
    let out = dir.path().join("t");
    ok(&safeplan(&[
        "train",
        "--config",
        s(&config),
        "--seed",
        "11",
        "--dynamics",
        "nonholonomic",
        "--episodes",
        "1",
        "--out",
        s(&out),
    ]));
    let resolved = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(resolved.contains("seed = 11"));
    assert!(resolved.contains("nonholonomic"));
    assert_eq!(std::fs::read_to_string(out.join("train_log.jsonl")).unwrap().lines().count(), 2);
}
