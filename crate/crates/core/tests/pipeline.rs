use std::fs;

use hgx_core::autodiff::{load_checkpoint, save_checkpoint};
use hgx_core::dataset::{convert, load_dataset_dir, DatasetBundle};
use hgx_core::hypergraph::Hypergraph;
use hgx_core::matrix::DenseMatrix;
use hgx_core::train::{prepare_features, run_experiment, train_run, ModelKind, TrainConfig, SCHEMA_VERSION};

/// Two communities joined by one bridging hyperedge, features that only
/// weakly separate them.
fn two_blocks() -> DatasetBundle {
    let n = 24;
    let mut edges = Vec::new();
    for block in [0, 12] {
        for k in 0..4 {
            edges.push((0..4).map(|i| block + (i * 3 + k) % 12).collect::<Vec<_>>());
        }
    }
    edges.push(vec![5, 17]);
    let labels: Vec<usize> = (0..n).map(|v| usize::from(v >= 12)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|v| {
            let t = if v >= 12 { 0.6 } else { 0.4 };
            vec![t + 0.3 * ((v * 7 % 5) as f64 / 5.0 - 0.4), 1.0 - t]
        })
        .collect();
    DatasetBundle {
        name: "blocks".into(),
        hypergraph: Hypergraph::from_edge_list(n, &edges, None).unwrap(),
        features: Some(DenseMatrix::from_rows(&rows).unwrap()),
        labels,
        num_classes: 2,
        notes: vec!["synthetic".into()],
    }
}

#[test]
fn config_file_drives_an_experiment_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("blocks");
    two_blocks().write_dir(&data_dir).unwrap();
    let cfg_path = dir.path().join("run.json");
    fs::write(
        &cfg_path,
        r#"{"dataset": {"dir": "blocks"}, "model": "hgnn", "hidden": 8, "lr": 0.05,
            "epochs": 60, "patience": 30, "runs": 3, "seed": 11}"#,
    )
    .unwrap();

    let cfg = TrainConfig::read(&cfg_path).unwrap();
    let data = cfg.dataset.load().unwrap();
    assert_eq!(data.num_nodes(), 24);
    let result = run_experiment(&cfg, &data, 2).unwrap();
    assert_eq!(result.schema_version, SCHEMA_VERSION);
    assert_eq!(result.runs.len(), 3);
    assert_eq!(result.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![11, 12, 13]);
    assert!(result.std.is_some());
    assert_eq!(result.config_hash, cfg.hash());

    let json = serde_json::to_value(&result).unwrap();
    for key in ["schema_version", "config", "config_hash", "defaults", "runs", "mean", "std"] {
        assert!(json.get(key).is_some(), "results JSON lacks {key}");
    }
}

#[test]
fn checkpoint_reproduces_the_trained_logits() {
    let data = two_blocks();
    let mut cfg = TrainConfig::new(hgx_core::train::DatasetSource::Dir { dir: "unused".into() }, ModelKind::AllsetTransformer);
    cfg.hidden = 8;
    cfg.heads = 2;
    cfg.epochs = 20;
    cfg.runs = 1;
    let features = prepare_features(&cfg, &data).unwrap();
    let run = train_run(&cfg, &data, &features, 0).unwrap();
    let ctx = run.model.prepare(&data.hypergraph).unwrap();
    let before = run.model.logits(&run.params, &ctx, &features).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("ckpt");
    save_checkpoint(&run.params, run.record.seed, &cfg.hash(), &stem).unwrap();
    let (manifest, params) = load_checkpoint(&stem).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash());
    let after = run.model.logits(&params, &ctx, &features).unwrap();
    assert_eq!(before, after);
}

#[test]
fn zoo_bundle_matches_the_raw_table() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/zoo");
    let bundle = load_dataset_dir(&root).unwrap();
    let raw = convert::read_zoo_uci(&root.join("zoo.data")).unwrap();
    assert_eq!(bundle.hypergraph, raw.hypergraph);
    assert_eq!(bundle.labels, raw.labels);
    assert_eq!(bundle.features, raw.features);
    assert_eq!(bundle.num_classes, 7);
    assert_eq!(bundle.hypergraph.num_edges(), 43);
}
