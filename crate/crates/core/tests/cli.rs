//! End-to-end exercise of the `seqevade` binary: the corpus -> train ->
//! attack -> bench -> report pipeline, plus the exit-code contract
//! (0 success, 1 usage error, 2 runtime failure).

use std::path::Path;
use std::process::{Command, Output};

fn seqevade(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seqevade"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn assert_code(out: &Output, code: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{context}: stdout={} stderr={}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

#[test]
fn pipeline_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Small corpus: quick but still trainable.
    let spec = serde_json::json!({
        "vocab_size": 120,
        "trace_length_range": [60, 100],
        "motif_set": [[17, 23, 5, 9], [40, 41, 42]],
        "motif_density": 0.15,
        "malicious_token_boost": 8,
        "n_samples": 60,
        "window": 20,
        "seed": 3,
    });
    std::fs::write(root.join("spec.json"), spec.to_string()).unwrap();

    let out = seqevade(
        &["gen-corpus", "--config", "spec.json", "--out", "corpus"],
        root,
    );
    assert_code(&out, 0, "gen-corpus");
    assert!(root.join("corpus").join("traces.jsonl").exists());

    let out = seqevade(
        &["train", "--corpus", "corpus", "--out", "model.json"],
        root,
    );
    assert_code(&out, 0, "train");
    let summary = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(summary.contains("accuracy"), "train prints accuracy: {summary}");

    let out = seqevade(
        &[
            "attack",
            "--corpus",
            "corpus",
            "--model",
            "model.json",
            "--budget",
            "100",
            "--limit",
            "3",
            "--out",
            "outcomes.jsonl",
        ],
        root,
    );
    assert_code(&out, 0, "attack");
    let lines = std::fs::read_to_string(root.join("outcomes.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 3);
    for line in lines.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v.get("evaded").is_some() && v.get("queries_used").is_some());
    }

    let out = seqevade(
        &[
            "bench",
            "--corpus",
            "corpus",
            "--model",
            "model.json",
            "--budgets",
            "100",
            "--seeds",
            "1",
            "--limit",
            "2",
            "--out",
            "bench.csv",
        ],
        root,
    );
    assert_code(&out, 0, "bench");

    let out = seqevade(&["report", "--input", "bench.csv"], root);
    assert_code(&out, 0, "report");
    let table = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(table.contains("effectiveness"), "report renders a table: {table}");

    // Exit-code contract.
    assert_code(&seqevade(&["--help"], root), 0, "--help");
    assert_code(&seqevade(&["attack", "--no-such-flag"], root), 1, "usage error");
    assert_code(
        &seqevade(&["train", "--corpus", "missing-dir", "--out", "m.json"], root),
        2,
        "runtime failure",
    );
}
