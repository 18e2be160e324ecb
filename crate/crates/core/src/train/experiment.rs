use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, ParamSet};
use crate::dataset::{row_normalize, DatasetBundle};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{streams, Rng};

use super::config::{FeatureSource, TrainConfig};
use super::features::synth_gaussian_features;
use super::metrics::{summarize, Summary};
use super::model::Model;
use super::run::{train_one_run, Schedule};
use super::split::{make_splits, SplitSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub train_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_trained: usize,
}

/// Choices the config does not spell out, written into every result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedDefaults {
    pub optimizer: String,
    pub adam: AdamConfig,
    pub weight_decay: String,
    pub model_selection: String,
    pub seed_derivation: String,
    pub split_sizes: String,
    pub feature_normalization: String,
}

impl RecordedDefaults {
    pub fn for_config(cfg: &TrainConfig) -> Self {
        Self {
            optimizer: "adam".into(),
            adam: AdamConfig::new(cfg.lr, cfg.wd),
            weight_decay: "decoupled: param -= lr * wd * param after each Adam step".into(),
            model_selection: format!(
                "best validation accuracy over {} epochs, ties to the earlier epoch, patience {}",
                cfg.epochs, cfg.patience
            ),
            seed_derivation: "run i uses seed + i; split, init, dropout and feature streams are 0, 1, 2, 3".into(),
            split_sizes: "validation and test floor(n * fraction), training the remainder; re-drawn per run".into(),
            feature_normalization: if cfg.row_normalize { "row l1".into() } else { "none".into() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema_version: u32,
    pub dataset: String,
    pub model: String,
    pub config: TrainConfig,
    pub config_hash: String,
    pub defaults: RecordedDefaults,
    pub runs: Vec<RunRecord>,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    pub wall_time_secs: f64,
}

impl ExperimentResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.test_accuracy).collect()
    }
}

/// Mean and sample standard deviation of the test accuracies.
pub fn aggregate_runs(runs: &[RunRecord]) -> Result<Summary> {
    summarize(&runs.iter().map(|r| r.test_accuracy).collect::<Vec<_>>())
}

/// The node features a config asks for.
pub fn prepare_features(cfg: &TrainConfig, data: &DatasetBundle) -> Result<DenseMatrix> {
    let x = match cfg.features {
        FeatureSource::Dataset => data.features.clone().ok_or_else(|| {
            Error::InvalidConfig(format!("dataset {} has no feature file; request gaussian features", data.name))
        })?,
        FeatureSource::Gaussian { sigma, dim } => synth_gaussian_features(&data.labels, data.num_classes, dim, sigma, cfg.seed)?,
    };
    Ok(if cfg.row_normalize { row_normalize(&x) } else { x })
}

/// A finished run with the model and its best-validation parameters.
#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub record: RunRecord,
    pub model: Model,
    pub params: ParamSet,
}

/// Trains run `index` of an experiment.
pub fn run_single(cfg: &TrainConfig, data: &DatasetBundle, features: &DenseMatrix, index: usize) -> Result<RunRecord> {
    Ok(train_run(cfg, data, features, index)?.record)
}

/// Like [`run_single`], keeping the trained parameters.
pub fn train_run(cfg: &TrainConfig, data: &DatasetBundle, features: &DenseMatrix, index: usize) -> Result<TrainedRun> {
    let seed = cfg.run_seed(index);
    let splits = make_splits(
        data.num_nodes(),
        &SplitSpec {
            fractions: cfg.split,
            seed,
        },
    )?;
    let mut params = ParamSet::new();
    let model = Model::new(cfg, features.cols(), data.num_classes, &mut params, &mut Rng::with_stream(seed, streams::INIT))?;
    let ctx = model.prepare(&data.hypergraph)?;
    let schedule = Schedule {
        lr: cfg.lr,
        wd: cfg.wd,
        epochs: cfg.epochs,
        patience: cfg.patience,
    };
    let out = train_one_run(&model, params, &ctx, features, &data.labels, &splits, &schedule, seed)?;
    let record = RunRecord {
        run: index,
        seed,
        test_accuracy: out.test_accuracy,
        val_accuracy: out.val_accuracy,
        train_accuracy: out.train_accuracy,
        best_epoch: out.best_epoch,
        epochs_trained: out.epochs_trained,
    };
    Ok(TrainedRun {
        record,
        model,
        params: out.params,
    })
}

/// All runs of `cfg` on `data`, `jobs` at a time. Results do not depend on
/// `jobs`.
pub fn run_experiment(cfg: &TrainConfig, data: &DatasetBundle, jobs: usize) -> Result<ExperimentResult> {
    Ok(run_experiment_with_params(cfg, data, jobs)?.0)
}

/// [`run_experiment`], also returning every run's trained model.
pub fn run_experiment_with_params(
    cfg: &TrainConfig,
    data: &DatasetBundle,
    jobs: usize,
) -> Result<(ExperimentResult, Vec<TrainedRun>)> {
    cfg.validate()?;
    let start = Instant::now();
    let features = prepare_features(cfg, data)?;
    if features.rows() != data.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} nodes",
            features.rows(),
            data.num_nodes()
        )));
    }
    let trained: Vec<TrainedRun> = if jobs <= 1 {
        (0..cfg.runs).map(|i| train_run(cfg, data, &features, i)).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
        pool.install(|| {
            (0..cfg.runs)
                .into_par_iter()
                .map(|i| train_run(cfg, data, &features, i))
                .collect::<Result<_>>()
        })?
    };
    let runs: Vec<RunRecord> = trained.iter().map(|t| t.record.clone()).collect();
    let summary = aggregate_runs(&runs)?;
    let result = ExperimentResult {
        schema_version: SCHEMA_VERSION,
        dataset: data.name.clone(),
        model: cfg.model.name().into(),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        defaults: RecordedDefaults::for_config(cfg),
        runs,
        mean: summary.mean,
        std: summary.std,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((result, trained))
}
