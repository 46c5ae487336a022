use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn sbd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbd"))
        .args(args)
        .output()
        .expect("spawn sbd")
}

fn ok(args: &[&str]) {
    let out = sbd(args);
    assert!(
        out.status.success(),
        "sbd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn boundary_lines(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn indices(set: &serde_json::Value) -> Vec<u64> {
    set["boundaries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| b["index"].as_u64().unwrap())
        .collect()
}

#[test]
fn generate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        ok(&[
            "generate",
            "--n",
            "3",
            "--horizon",
            "200",
            "--seed",
            seed,
            "--out",
            p(out),
        ]);
    }
    let file = "trajectories/traj-00001.jsonl";
    let ta = fs::read(a.join(file)).unwrap();
    assert_eq!(ta, fs::read(b.join(file)).unwrap());
    assert_ne!(ta, fs::read(c.join(file)).unwrap());
    assert_eq!(
        fs::read(a.join("labels.jsonl")).unwrap(),
        fs::read(b.join("labels.jsonl")).unwrap()
    );
}

#[test]
fn invalid_switching_scale_exits_2() {
    let dir = TempDir::new().unwrap();
    let out = sbd(&["generate", "--K", "0.5", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("K must be"));
}

#[test]
fn missing_corpus_exits_3() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope");
    let out = sbd(&["train", "--corpus", p(&missing), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn loss_mode_requires_gap() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&[
        "generate",
        "--n",
        "1",
        "--horizon",
        "50",
        "--out",
        p(&corpus),
    ]);
    let out = sbd(&[
        "segment",
        "--corpus",
        p(&corpus),
        "--mode",
        "loss",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fixed_baseline_on_300_steps() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    let seg = dir.path().join("seg");
    ok(&[
        "generate",
        "--n",
        "2",
        "--horizon",
        "300",
        "--out",
        p(&corpus),
    ]);
    ok(&[
        "segment",
        "--corpus",
        p(&corpus),
        "--mode",
        "fixed:128",
        "--out",
        p(&seg),
    ]);
    for set in boundary_lines(&seg.join("boundaries.jsonl")) {
        assert_eq!(indices(&set), vec![128, 256]);
    }
    let segments = fs::read_to_string(seg.join("segments.jsonl")).unwrap();
    assert_eq!(segments.lines().count(), 6);
}

#[test]
fn info_mode_without_events_finds_nothing() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    let model = dir.path().join("model");
    let seg = dir.path().join("seg");
    ok(&[
        "generate",
        "--n",
        "4",
        "--horizon",
        "400",
        "--event-prob",
        "0",
        "--out",
        p(&corpus),
    ]);
    ok(&["train", "--corpus", p(&corpus), "--out", p(&model)]);
    ok(&[
        "segment",
        "--corpus",
        p(&corpus),
        "--model",
        p(&model.join("model.json")),
        "--mode",
        "info",
        "--out",
        p(&seg),
    ]);
    let sets = boundary_lines(&seg.join("boundaries.jsonl"));
    assert_eq!(sets.len(), 4);
    assert!(sets.iter().all(|s| indices(s).is_empty()));
    assert_eq!(fs::read_dir(seg.join("loss_traces")).unwrap().count(), 4);
}

#[test]
fn prune_merges_and_splits() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("segments.jsonl");
    let mut start = 0;
    let mut text = String::new();
    for len in [12, 12, 6, 196, 37] {
        text.push_str(&format!(
            "{{\"trajectory_id\":\"t\",\"start\":{start},\"end\":{},\"reason\":null}}\n",
            start + len
        ));
        start += len;
    }
    fs::write(&input, text).unwrap();
    ok(&["prune", "--segments", p(&input), "--out", p(dir.path())]);
    let lens: Vec<u64> = boundary_lines(&dir.path().join("pruned_segments.jsonl"))
        .iter()
        .map(|s| s["end"].as_u64().unwrap() - s["start"].as_u64().unwrap())
        .collect();
    assert_eq!(lens, vec![24, 200, 39]);
}

#[test]
fn evaluating_the_labels_scores_one() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    let ev = dir.path().join("ev");
    ok(&[
        "generate",
        "--n",
        "5",
        "--horizon",
        "600",
        "--K",
        "50",
        "--out",
        p(&corpus),
    ]);
    ok(&[
        "evaluate",
        "--corpus",
        p(&corpus),
        "--boundaries",
        p(&corpus.join("labels.jsonl")),
        "--out",
        p(&ev),
    ]);
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ev.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["summary"]["f1"].as_f64(), Some(1.0));
    let csv = fs::read_to_string(ev.join("length_histogram.csv")).unwrap();
    assert!(csv.starts_with("bin_low,bin_high,count"));
}

#[test]
fn verify_bounds_exit_codes() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&[
        "generate",
        "--preset",
        "bound-check",
        "--n",
        "40",
        "--out",
        p(&corpus),
    ]);
    ok(&[
        "verify-bounds",
        "--corpus",
        p(&corpus),
        "--out",
        p(&dir.path().join("v")),
    ]);

    let shuffled = sbd(&[
        "verify-bounds",
        "--corpus",
        p(&corpus),
        "--shuffle-labels",
        "--out",
        p(&dir.path().join("s")),
    ]);
    assert_eq!(shuffled.status.code(), Some(4));

    let refused = sbd(&[
        "verify-bounds",
        "--corpus",
        p(&corpus),
        "--c",
        "0.01",
        "--out",
        p(&dir.path().join("r")),
    ]);
    assert_eq!(refused.status.code(), Some(2));
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        format!(
            "{{\"seed\": 9, \"out\": \"{}\", \"generate\": {{\"n\": 2, \"horizon\": 120}}}}",
            p(&out)
        ),
    )
    .unwrap();
    ok(&["--config", p(&cfg), "generate", "--horizon", "80"]);
    let resolved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved["n"], 2);
    assert_eq!(resolved["generator"]["horizon"], 80);
    assert_eq!(resolved["generator"]["seed"], 9);

    fs::write(&cfg, "{\"generate\": {\"bogus\": 1}}").unwrap();
    let bad = sbd(&["--config", p(&cfg), "generate", "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(2));
}
