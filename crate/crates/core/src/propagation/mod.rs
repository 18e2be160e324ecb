//! Classical hypergraph propagation rules and the learnable layers built on
//! them.

mod classical;
mod layers;

pub use classical::{ce_prop_a, ce_prop_h, h_prop, z_prop};
pub use layers::{
    hcha_layer, hgnn_layer, hnhn_layer, hypergcn_layer, hypersage_layer, mediator_operator,
    mediator_pairs, unit_normalize_rows, HchaLayer, HgnnLayer, HnhnLayer, HnhnNormalizer,
    HnhnParams, HyperSageLayer, ZeroRowPolicy,
};
pub(crate) use layers::{check_power, power_mean};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Tape};
use crate::error::Result;
use crate::hypergraph::Hypergraph;
use crate::matrix::DenseMatrix;

/// A propagation rule together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PropagationRule {
    CePropA,
    CePropH,
    ZProp { order: usize },
    HProp { order: usize },
    Hgnn,
    Hcha,
    Hnhn(HnhnParams),
    HyperGcn,
    HyperSage { p: f64 },
}

impl PropagationRule {
    pub fn name(&self) -> &'static str {
        match self {
            PropagationRule::CePropA => "ce-prop-a",
            PropagationRule::CePropH => "ce-prop-h",
            PropagationRule::ZProp { .. } => "z-prop",
            PropagationRule::HProp { .. } => "h-prop",
            PropagationRule::Hgnn => "hgnn",
            PropagationRule::Hcha => "hcha",
            PropagationRule::Hnhn(_) => "hnhn",
            PropagationRule::HyperGcn => "hypergcn",
            PropagationRule::HyperSage { .. } => "hypersage",
        }
    }

    /// One propagation step. Learnable rules run with `Θ = I`, zero bias, no
    /// activation and (for HCHA) uniform attention, which leaves only the
    /// structural part of the update.
    pub fn apply(&self, hg: &Hypergraph, x: &DenseMatrix) -> Result<DenseMatrix> {
        match *self {
            PropagationRule::CePropA => ce_prop_a(hg, x),
            PropagationRule::CePropH => ce_prop_h(hg, x),
            PropagationRule::ZProp { order } => z_prop(hg, x, order),
            PropagationRule::HProp { order } => h_prop(hg, x, order),
            _ => self.apply_layer(hg, x),
        }
    }

    fn apply_layer(&self, hg: &Hypergraph, x: &DenseMatrix) -> Result<DenseMatrix> {
        let f = x.cols();
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let theta = t.constant(DenseMatrix::identity(f));
        let bias = t.constant(DenseMatrix::zeros(1, f));
        let act = Activation::Identity;
        let y = match *self {
            PropagationRule::Hgnn => HgnnLayer::new(hg).forward(&mut t, xv, theta, bias, act)?,
            PropagationRule::Hcha => HchaLayer::new(hg).forward(&mut t, xv, None, theta, bias, act)?,
            PropagationRule::Hnhn(p) => {
                HnhnLayer::new(hg, p)?.forward(&mut t, xv, theta, bias, theta, bias, act)?.0
            }
            PropagationRule::HyperGcn => hypergcn_layer(&mut t, hg, xv, theta, bias, act)?,
            PropagationRule::HyperSage { p } => HyperSageLayer::new(hg, p).forward(&mut t, xv, theta, act)?,
            _ => unreachable!("parameter-free rules are handled by apply"),
        };
        Ok(t.value(y).clone())
    }

    /// `steps` successive applications.
    pub fn iterate(&self, hg: &Hypergraph, x: &DenseMatrix, steps: usize) -> Result<DenseMatrix> {
        let mut cur = x.clone();
        for _ in 0..steps {
            cur = self.apply(hg, &cur)?;
        }
        Ok(cur)
    }
}
