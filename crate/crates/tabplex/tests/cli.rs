//! CLI behavior: artifacts, exit codes, determinism, and flag validation.

use std::path::Path;
use std::process::Output;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_tabplex")
}

fn data_dir() -> String {
    format!("{}/../../data", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    std::process::Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn ingest_and_graph(out: &Path) {
    let d = data_dir();
    let data = format!("{d}/sample.csv");
    let schema = format!("{d}/sample.schema.json");
    let relations = format!("{d}/sample.relations.json");
    let out_s = out.to_str().unwrap();
    assert!(run(&["ingest", "--data", &data, "--schema", &schema, "--out", out_s]).status.success());
    assert!(run(&["build-graph", "--relations", &relations, "--out", out_s]).status.success());
}

#[test]
fn build_graph_writes_one_edge_file_per_relation_plus_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ingest_and_graph(dir.path());

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("graph.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["n_nodes"], 7);
    assert_eq!(manifest["directed"], true);
    assert_eq!(manifest["layers"][0], "close_age");
    assert_eq!(manifest["layers"][1], "same_education");
    assert_eq!(manifest["layers"].as_array().unwrap().len(), 2);

    let age = std::fs::read_to_string(dir.path().join("layer_00_close_age.edges")).unwrap();
    let age_edges: Vec<&str> = age.lines().collect();
    // ages [45,52,26,61,28,27,25]: pairs within two years, oriented by the
    // strictly increasing apply times
    assert_eq!(age_edges, vec!["2\t4", "2\t5", "2\t6", "4\t5", "5\t6"]);

    let edu = std::fs::read_to_string(dir.path().join("layer_01_same_education.edges")).unwrap();
    let edu_edges: Vec<&str> = edu.lines().collect();
    // education level 3 on rows {0, 2, 4, 5}: six pairs, earlier -> later
    assert_eq!(
        edu_edges,
        vec!["0\t2", "0\t4", "0\t5", "2\t4", "2\t5", "4\t5"]
    );
}

#[test]
fn train_with_the_same_seed_writes_identical_history() {
    let dir = tempfile::tempdir().unwrap();
    ingest_and_graph(dir.path());
    let out = dir.path().to_str().unwrap();
    assert!(run(&["train", "--out", out, "--seed", "7"]).status.success());
    let first = std::fs::read(dir.path().join("history.jsonl")).unwrap();
    assert!(run(&["train", "--out", out, "--seed", "7"]).status.success());
    let second = std::fs::read(dir.path().join("history.jsonl")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn evaluate_without_a_checkpoint_exits_three_and_names_the_artifact() {
    let dir = tempfile::tempdir().unwrap();
    ingest_and_graph(dir.path());
    let out = run(&["evaluate", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("checkpoint.json"), "stderr: {stderr}");
    // single-line machine-readable error
    assert_eq!(stderr.trim().lines().count(), 1);
    assert!(serde_json::from_str::<serde_json::Value>(stderr.trim()).is_ok());
}

#[test]
fn unknown_flags_exit_two() {
    let out = run(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn ingest_missing_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "ingest",
        "--data",
        "/nonexistent/file.csv",
        "--schema",
        &format!("{}/sample.schema.json", data_dir()),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn corrupted_artifacts_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    ingest_and_graph(dir.path());
    std::fs::write(dir.path().join("dataset.json"), "not json").unwrap();
    let out = run(&["train", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(serde_json::from_str::<serde_json::Value>(stderr.trim()).is_ok());
}

#[test]
fn invalid_config_values_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    ingest_and_graph(dir.path());
    let config = dir.path().join("bad.json");
    std::fs::write(
        &config,
        serde_json::json!({
            "task": "classification",
            "lr": 0.5,
            "dropout": 0.1,
            "hidden_dim": 64,
            "weight_decay": 0.0,
            "attention_head": 2,
            "layer_size": 2,
            "epochs": 5,
            "patience": 2,
            "seed": 0
        })
        .to_string(),
    )
    .unwrap();
    let out = run(&[
        "train",
        "--out",
        dir.path().to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3), "lr outside its range must be rejected");
}

#[test]
fn training_on_a_layer_subset_drops_the_other_layers() {
    let dir = tempfile::tempdir().unwrap();
    ingest_and_graph(dir.path());
    let out = dir.path().to_str().unwrap();
    assert!(run(&[
        "train",
        "--out",
        out,
        "--seed",
        "3",
        "--relations",
        "same_education",
        "--agg",
        "mean"
    ])
    .status
    .success());
    let ckpt: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("checkpoint.json")).unwrap())
            .unwrap();
    assert_eq!(ckpt["layer_names"].as_array().unwrap().len(), 1);
    assert_eq!(ckpt["layer_names"][0], "same_education");
    assert_eq!(ckpt["beta"].as_array().unwrap().len(), 1);
    // prediction and evaluation run against the stored layer subset
    assert!(run(&["predict", "--out", out]).status.success());
    assert!(run(&["evaluate", "--out", out]).status.success());
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    ingest_and_graph(dir.path());
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["train", "--out", out, "--seed", "1"],
        vec!["predict", "--out", out],
        vec!["export-embeddings", "--out", out],
        vec!["evaluate", "--out", out],
    ] {
        let o = run(&args);
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    for artifact in [
        "dataset.json",
        "graph.json",
        "checkpoint.json",
        "history.jsonl",
        "predictions.csv",
        "embeddings.csv",
        "metrics.txt",
        "manifest.json",
    ] {
        assert!(dir.path().join(artifact).exists(), "missing {artifact}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.txt")).unwrap();
    assert!(metrics.contains("valid_auc:"));
    assert!(metrics.contains("beta.close_age:"));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    let stages: Vec<&str> = manifest["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages[0], "ingest");
    assert!(stages.contains(&"build-graph"));
    assert!(stages.contains(&"train"));
}

#[test]
fn tune_writes_a_best_config_inside_the_search_ranges() {
    let dir = tempfile::tempdir().unwrap();
    ingest_and_graph(dir.path());
    let out = dir.path().to_str().unwrap();
    let base = dir.path().join("base.json");
    std::fs::write(
        &base,
        serde_json::json!({
            "task": "classification",
            "lr": 1e-3,
            "dropout": 0.0,
            "hidden_dim": 64,
            "weight_decay": 0.0,
            "attention_head": 2,
            "layer_size": 1,
            "epochs": 5,
            "patience": 2,
            "seed": 5
        })
        .to_string(),
    )
    .unwrap();
    let o = run(&[
        "tune",
        "--out",
        out,
        "--config",
        base.to_str().unwrap(),
        "--budget",
        "3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let best: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("best_config.json")).unwrap())
            .unwrap();
    let cfg = &best["config"];
    let lr = cfg["lr"].as_f64().unwrap();
    assert!((1e-6..=1e-3).contains(&lr));
    assert!((0.0..=1.0).contains(&cfg["dropout"].as_f64().unwrap()));
    assert!([64, 128, 256].contains(&cfg["hidden_dim"].as_u64().unwrap()));
    assert!((0.0..=1.0).contains(&cfg["weight_decay"].as_f64().unwrap()));
    assert!([2, 4].contains(&cfg["attention_head"].as_u64().unwrap()));
    assert!((1..=4).contains(&cfg["layer_size"].as_u64().unwrap()));
    let trials = std::fs::read_to_string(dir.path().join("trials.jsonl")).unwrap();
    assert_eq!(trials.lines().count(), 3);
}
