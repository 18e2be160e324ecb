use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, ParamSet, Tape};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::{streams, Rng};

use super::metrics::micro_f1;
use super::model::{GraphContext, Model};
use super::split::Splits;

/// Optimization schedule of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lr: f64,
    pub wd: f64,
    pub epochs: usize,
    pub patience: usize,
}

/// Labels with the test rows blanked out: the only view of the labels the
/// optimization loop receives.
#[derive(Debug, Clone)]
pub struct VisibleLabels {
    labels: Arc<Vec<usize>>,
}

impl VisibleLabels {
    pub fn new(labels: &[usize], splits: &Splits) -> Self {
        let mut visible = labels.to_vec();
        for &i in &splits.test {
            visible[i] = 0;
        }
        Self {
            labels: Arc::new(visible),
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Parameters at the selected epoch.
    pub params: ParamSet,
    /// Epoch of the selected parameters; 0 is the initialization.
    pub best_epoch: usize,
    pub epochs_trained: usize,
    /// Validation accuracy after every epoch, starting with epoch 0.
    pub val_curve: Vec<f64>,
    pub train_loss: Vec<f64>,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Adam on the masked cross-entropy of the training rows, keeping the
/// parameters with the best validation accuracy (ties go to the earlier
/// epoch) and stopping after `patience` epochs without improvement. Test
/// labels are read only to score the selected parameters.
#[allow(clippy::too_many_arguments)]
pub fn train_one_run(
    model: &Model,
    mut params: ParamSet,
    ctx: &GraphContext,
    features: &DenseMatrix,
    labels: &[usize],
    splits: &Splits,
    schedule: &Schedule,
    seed: u64,
) -> Result<RunOutcome> {
    if labels.len() != features.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} feature rows",
            labels.len(),
            features.rows()
        )));
    }
    let visible = VisibleLabels::new(labels, splits);
    let mut outcome = fit(model, &mut params, ctx, features, &visible, splits, schedule, seed)?;
    let pred = model.logits(&outcome.params, ctx, features)?.argmax_rows();
    outcome.test_accuracy = micro_f1(&pred, labels, &splits.test)?;
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
fn fit(
    model: &Model,
    params: &mut ParamSet,
    ctx: &GraphContext,
    features: &DenseMatrix,
    visible: &VisibleLabels,
    splits: &Splits,
    schedule: &Schedule,
    seed: u64,
) -> Result<RunOutcome> {
    let labels = visible.as_slice();
    let train_rows = Arc::new(splits.train.clone());
    let mut dropout_rng = Rng::with_stream(seed, streams::DROPOUT);
    let mut adam = AdamState::new(AdamConfig::new(schedule.lr, schedule.wd), params);

    let score = |params: &ParamSet| -> Result<(f64, f64)> {
        let pred = model.logits(params, ctx, features)?.argmax_rows();
        Ok((micro_f1(&pred, labels, &splits.train)?, micro_f1(&pred, labels, &splits.val)?))
    };
    let (mut best_train, mut best_val) = score(params)?;
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut val_curve = vec![best_val];
    let mut train_loss = Vec::new();
    let mut epochs_trained = 0;

    for epoch in 1..=schedule.epochs {
        let mut tape = Tape::new();
        let p = tape.bind(params);
        let x = tape.constant(features.clone());
        let logits = model.forward(&mut tape, &p, ctx, x, Some(&mut dropout_rng))?;
        let loss = tape.cross_entropy(logits, visible.labels.clone(), train_rows.clone())?;
        let lv = tape.value(loss).get(0, 0);
        if !lv.is_finite() {
            return Err(Error::Divergence { epoch, loss: lv });
        }
        let grads = tape.backward(loss)?;
        let grads = p.grads(&tape, &grads);
        adam.step(params, &grads)?;
        train_loss.push(lv);
        epochs_trained = epoch;

        let (train_acc, val_acc) = score(params)?;
        val_curve.push(val_acc);
        if val_acc > best_val {
            best_val = val_acc;
            best_train = train_acc;
            best = params.clone();
            best_epoch = epoch;
        } else if epoch - best_epoch >= schedule.patience {
            break;
        }
    }
    Ok(RunOutcome {
        params: best,
        best_epoch,
        epochs_trained,
        val_curve,
        train_loss,
        train_accuracy: best_train,
        val_accuracy: best_val,
        test_accuracy: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::Hypergraph;
    use crate::train::config::{DatasetSource, ModelKind, TrainConfig};
    use crate::train::split::{make_splits, SplitSpec};

    fn setup(kind: ModelKind) -> (TrainConfig, Hypergraph, DenseMatrix, Vec<usize>, Splits) {
        // Two classes with orthogonal features; hyperedges stay inside a class.
        let n = 24;
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let rows: Vec<[f64; 2]> = labels.iter().map(|&y| if y == 0 { [1.0, 0.0] } else { [0.0, 1.0] }).collect();
        let x = DenseMatrix::from_rows(&rows).unwrap();
        let edges: Vec<Vec<usize>> = (0..n - 4).step_by(2).map(|s| vec![s, s + 2, s + 4]).collect();
        let hg = Hypergraph::from_edge_list(n, &edges, None).unwrap();
        let mut cfg = TrainConfig::new(DatasetSource::Dir { dir: "unused".into() }, kind);
        cfg.hidden = 8;
        cfg.lr = 0.05;
        cfg.dropout = 0.0;
        let splits = make_splits(n, &SplitSpec::new(3)).unwrap();
        (cfg, hg, x, labels, splits)
    }

    fn run(cfg: &TrainConfig, hg: &Hypergraph, x: &DenseMatrix, labels: &[usize], splits: &Splits, epochs: usize) -> RunOutcome {
        let mut params = ParamSet::new();
        let model = Model::new(cfg, x.cols(), 2, &mut params, &mut Rng::with_stream(1, streams::INIT)).unwrap();
        let ctx = model.prepare(hg).unwrap();
        let schedule = Schedule {
            lr: cfg.lr,
            wd: cfg.wd,
            epochs,
            patience: 100,
        };
        train_one_run(&model, params, &ctx, x, labels, splits, &schedule, 1).unwrap()
    }

    #[test]
    fn separable_toy_is_fit_within_a_hundred_epochs() {
        for kind in [ModelKind::Mlp, ModelKind::AllsetTransformer, ModelKind::Hgnn] {
            let (cfg, hg, x, labels, splits) = setup(kind);
            let out = run(&cfg, &hg, &x, &labels, &splits, 100);
            let pred = {
                let mut params = ParamSet::new();
                let model = Model::new(&cfg, 2, 2, &mut params, &mut Rng::new(0)).unwrap();
                model.logits(&out.params, &model.prepare(&hg).unwrap(), &x).unwrap().argmax_rows()
            };
            assert_eq!(micro_f1(&pred, &labels, &splits.train).unwrap(), 1.0, "{kind:?}");
            assert_eq!(out.train_accuracy, 1.0, "{kind:?}");
        }
    }

    #[test]
    fn zero_epochs_scores_the_initialization() {
        let (cfg, hg, x, labels, splits) = setup(ModelKind::AllsetDeepsets);
        let out = run(&cfg, &hg, &x, &labels, &splits, 0);
        assert_eq!((out.best_epoch, out.epochs_trained), (0, 0));
        assert_eq!(out.val_curve.len(), 1);
        let mut params = ParamSet::new();
        let model = Model::new(&cfg, 2, 2, &mut params, &mut Rng::with_stream(1, streams::INIT)).unwrap();
        let pred = model.logits(&params, &model.prepare(&hg).unwrap(), &x).unwrap().argmax_rows();
        assert_eq!(out.test_accuracy, micro_f1(&pred, &labels, &splits.test).unwrap());
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let (mut cfg, hg, x, labels, splits) = setup(ModelKind::AllsetTransformer);
        cfg.dropout = 0.5;
        let a = run(&cfg, &hg, &x, &labels, &splits, 30);
        let b = run(&cfg, &hg, &x, &labels, &splits, 30);
        assert_eq!(a.params, b.params);
        assert_eq!(a.val_curve, b.val_curve);
        assert_eq!(a.test_accuracy.to_bits(), b.test_accuracy.to_bits());
    }

    #[test]
    fn test_labels_do_not_influence_training() {
        let (mut cfg, hg, x, labels, splits) = setup(ModelKind::AllsetTransformer);
        cfg.dropout = 0.3;
        let mut scrambled = labels.clone();
        for &i in &splits.test {
            scrambled[i] = 1 - scrambled[i];
        }
        let a = run(&cfg, &hg, &x, &labels, &splits, 25);
        let b = run(&cfg, &hg, &x, &scrambled, &splits, 25);
        assert_eq!(a.params, b.params);
        assert_eq!(a.val_curve, b.val_curve);
        assert_eq!(a.train_loss, b.train_loss);
        assert_eq!(a.test_accuracy + b.test_accuracy, 1.0);
    }

    #[test]
    fn divergence_is_reported() {
        let (mut cfg, hg, x, labels, splits) = setup(ModelKind::Mlp);
        cfg.lr = 1e300;
        let mut params = ParamSet::new();
        let model = Model::new(&cfg, 2, 2, &mut params, &mut Rng::new(1)).unwrap();
        let ctx = model.prepare(&hg).unwrap();
        let schedule = Schedule { lr: 1e300, wd: 0.0, epochs: 50, patience: 100 };
        let e = train_one_run(&model, params, &ctx, &x, &labels, &splits, &schedule, 1).unwrap_err();
        assert_eq!(e.kind(), "Divergence");
    }
}
