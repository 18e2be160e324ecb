//! Shared fixtures for the benchmarks.

use hgx_core::dataset::DatasetBundle;
use hgx_core::rng::Rng;
use hgx_core::train::{DatasetSource, ModelKind, TrainConfig};
use hgx_core::{DenseMatrix, Hypergraph};

/// `m` hyperedges of 2 to `max_size` distinct nodes drawn uniformly from `n`.
pub fn random_hypergraph(n: usize, m: usize, max_size: usize, seed: u64) -> Hypergraph {
    let mut rng = Rng::new(seed);
    let edges: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            let size = 2 + rng.index(max_size - 1);
            let mut members: Vec<usize> = (0..size).map(|_| rng.index(n)).collect();
            members.sort_unstable();
            members.dedup();
            members
        })
        .collect();
    Hypergraph::from_edge_list(n, &edges, None).expect("valid by construction")
}

/// Entries uniform in `[0.1, 1)`, positive so every rule accepts them.
pub fn random_features(n: usize, f: usize, seed: u64) -> DenseMatrix {
    let mut rng = Rng::new(seed);
    let data = (0..n * f).map(|_| rng.uniform(0.1, 1.0)).collect();
    DenseMatrix::new(n, f, data).expect("sized")
}

/// Planted-partition node classification: hyperedges mostly stay inside one
/// class and features are noisy class indicators.
pub fn planted_dataset(n: usize, m: usize, classes: usize, f: usize, seed: u64) -> DatasetBundle {
    let mut rng = Rng::new(seed);
    let labels: Vec<usize> = (0..n).map(|v| v % classes).collect();
    let by_class: Vec<Vec<usize>> = (0..classes).map(|c| (c..n).step_by(classes).collect()).collect();
    let edges: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            let home = &by_class[rng.index(classes)];
            let mut members: Vec<usize> = (0..2 + rng.index(6))
                .map(|_| if rng.bernoulli(0.8) { home[rng.index(home.len())] } else { rng.index(n) })
                .collect();
            members.sort_unstable();
            members.dedup();
            members
        })
        .collect();
    let data = (0..n * f)
        .map(|i| {
            let (v, j) = (i / f, i % f);
            let signal = if j % classes == labels[v] { 1.0 } else { 0.0 };
            signal + rng.normal(0.0, 1.0)
        })
        .collect();
    DatasetBundle {
        name: "planted".into(),
        hypergraph: Hypergraph::from_edge_list(n, &edges, None).expect("valid by construction"),
        features: Some(DenseMatrix::new(n, f, data).expect("sized")),
        labels,
        num_classes: classes,
        notes: Vec::new(),
    }
}

/// A short single-run config; the dataset source is unused because the
/// bundle is passed in directly.
pub fn bench_config(model: ModelKind, epochs: usize) -> TrainConfig {
    let mut cfg = TrainConfig::new(DatasetSource::Dir { dir: "unused".into() }, model);
    cfg.hidden = 32;
    cfg.heads = 2;
    cfg.epochs = epochs;
    cfg.patience = epochs;
    cfg.runs = 1;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_the_requested_shapes() {
        let hg = random_hypergraph(50, 20, 5, 1);
        assert_eq!((hg.num_nodes(), hg.num_edges()), (50, 20));
        assert!(hg.edge_sizes().iter().all(|&s| (1..=5).contains(&s)));
        let d = planted_dataset(60, 30, 3, 8, 2);
        assert_eq!(d.labels.len(), 60);
        assert_eq!(d.features.as_ref().map(|x| (x.rows(), x.cols())), Some((60, 8)));
    }
}
