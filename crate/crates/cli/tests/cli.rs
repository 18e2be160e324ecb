use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hgx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgx"))
        .args(args)
        .env_remove("HGX_SEED")
        .env_remove("HGX_CORA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn matrix(csv: &str) -> Vec<Vec<f64>> {
    csv.lines().map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

fn zoo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/zoo")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn clique_adjacency_of_a_single_pair() {
    let dir = tempfile::tempdir().unwrap();
    let hg = dir.path().join("pair.hg");
    fs::write(&hg, "2 1\n0 1\n").unwrap();
    let out = stdout(&hgx(&["convert", "ce-adj", s(&hg)]));
    assert_eq!(matrix(&out), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
}

#[test]
fn star_round_trip_recovers_the_hypergraph() {
    let dir = tempfile::tempdir().unwrap();
    let star = dir.path().join("zoo.star");
    let back = dir.path().join("zoo.hg");
    let zoo_hg = zoo().join("zoo.hg");
    stdout(&hgx(&["convert", "to-star", s(&zoo_hg), "-o", s(&star)]));
    stdout(&hgx(&["convert", "from-star", s(&star), "-o", s(&back)]));
    let original = stdout(&hgx(&["convert", "hg", s(&zoo_hg)]));
    assert_eq!(fs::read_to_string(&back).unwrap(), original);
}

#[test]
fn stats_on_the_zoo_bundle() {
    let out = stdout(&hgx(&["stats", s(&zoo()), "--json"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["num_nodes"], 101);
    assert_eq!(v["num_edges"], 43);
    assert_eq!(v["dataset"]["features"], 16);
    assert_eq!(v["dataset"]["classes"], 7);
}

#[test]
fn missing_input_is_a_parse_error_with_exit_2() {
    let o = hgx(&["train", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "ParseError");
}

#[test]
fn missing_dataset_file_is_a_parse_error_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"dataset": {"dir": "nowhere"}, "model": "mlp", "runs": 1}"#).unwrap();
    let o = hgx(&["train", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "ParseError");
}

#[test]
fn single_run_omits_the_std() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let results = dir.path().join("results.json");
    let body = serde_json::json!({
        "dataset": {"dir": zoo()},
        "model": "mlp",
        "hidden": 8,
        "epochs": 20,
        "patience": 20,
        "runs": 1,
    });
    fs::write(&cfg, body.to_string()).unwrap();
    let stem = dir.path().join("params");
    stdout(&hgx(&["--seed", "4", "train", "--config", s(&cfg), "-o", s(&results), "--save-params", s(&stem)]));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&results).unwrap()).unwrap();
    assert_eq!(v["runs"].as_array().unwrap().len(), 1);
    assert_eq!(v["runs"][0]["seed"], 4);
    assert!(v.get("mean").is_some());
    assert!(v.get("std").is_none());
    assert!(dir.path().join("params-run0.json").exists());
    assert!(dir.path().join("params-run0.bin").exists());
}

#[test]
fn synthetic_features_have_the_requested_shape_and_are_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.txt");
    let text: String = (0..1290).map(|i| format!("{}\n", i % 2)).collect();
    fs::write(&labels, text).unwrap();
    let run = |seed: &str| stdout(&hgx(&["--seed", seed, "synth-features", "--labels", s(&labels), "--sigma", "0.6"]));
    let a = run("7");
    let rows: Vec<&str> = a.lines().collect();
    assert_eq!(rows.len(), 1290);
    assert!(rows.iter().all(|r| r.split(',').count() == 100));
    assert_eq!(a, run("7"));
    assert_ne!(a, run("8"));
}

#[test]
fn propagate_matches_the_clique_product() {
    let dir = tempfile::tempdir().unwrap();
    let hg = dir.path().join("tri.hg");
    let x = dir.path().join("x.csv");
    fs::write(&hg, "3 1\n0 1 2\n").unwrap();
    fs::write(&x, "1\n2\n4\n").unwrap();
    let out = stdout(&hgx(&["propagate", "--hg", s(&hg), "--features", s(&x), "--rule", "ce-prop-a"]));
    assert_eq!(matrix(&out), vec![vec![6.0], vec![5.0], vec![3.0]]);
    let twice = stdout(&hgx(&[
        "propagate", "--hg", s(&hg), "--features", s(&x), "--rule", "ce-prop-a", "--steps", "2",
    ]));
    assert_eq!(matrix(&twice), vec![vec![8.0], vec![9.0], vec![11.0]]);
}

#[test]
fn unknown_reproduce_target_is_an_input_error() {
    let o = hgx(&["reproduce", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gradcheck_reports_each_requested_layer() {
    let out = stdout(&hgx(&["gradcheck", "--layer", "hgnn", "--layer", "hypersage", "--seeds", "1", "--json"]));
    let rows: Vec<serde_json::Value> = serde_json::from_str(&out).unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r["passed"], true, "{r}");
        assert!(r["max_rel_err"].as_f64().unwrap() < 1e-4);
    }
}

#[test]
fn reproduce_theorems_passes() {
    let out = stdout(&hgx(&["reproduce", "theorems"]));
    assert!(out.starts_with("PASS [1]"), "{out}");
}

#[test]
fn cora_without_data_fails_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = hgx(&["reproduce", "cora", "--data", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("FAIL [7]"));
}
