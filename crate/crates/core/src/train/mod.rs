//! Transductive node classification: splits, training, evaluation and
//! multi-run experiments.

mod config;
mod experiment;
mod features;
mod metrics;
mod model;
mod run;
mod split;

pub use config::{DatasetSource, FeatureSource, ModelKind, TrainConfig};
pub use experiment::{
    aggregate_runs, prepare_features, run_experiment, run_experiment_with_params, run_single, train_run, ExperimentResult, RecordedDefaults, RunRecord,
    TrainedRun,
    SCHEMA_VERSION,
};
pub use features::{synth_gaussian_features, SYNTHETIC_DIM};
pub use metrics::{mean, micro_f1, sample_std, summarize, Summary};
pub use model::{allset_network_spec, GraphContext, Model};
pub use run::{train_one_run, RunOutcome, Schedule, VisibleLabels};
pub use split::{make_splits, SplitFractions, SplitSpec, Splits, MIN_SPLIT_NODES};
