use serde::{Deserialize, Serialize};

use crate::allset::{
    AggregatorSpec, AllSetGraph, AllSetLayerSpec, AllSetNetwork, AllSetNetworkSpec, MultisetFunctionSpec,
    SetTransformerSpec,
};
use crate::autodiff::{Activation, Bound, Linear, MlpSpec, ParamId, ParamSet, Tape, Var};
use crate::error::Result;
use crate::hypergraph::Hypergraph;
use crate::matrix::DenseMatrix;
use crate::propagation::{hypergcn_layer, HchaLayer, HgnnLayer, HnhnLayer, HyperSageLayer, ZeroRowPolicy};
use crate::rng::Rng;

use super::config::{ModelKind, TrainConfig};

/// Weights of one layer of a classical model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Classical {
    Hgnn { theta: ParamId, bias: ParamId },
    Hnhn { theta_e: ParamId, bias_e: ParamId, theta_v: ParamId, bias_v: ParamId },
    Hcha { theta: ParamId, bias: ParamId },
    HyperGcn { theta: ParamId, bias: ParamId },
    HyperSage { theta: ParamId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Body {
    AllSet(AllSetNetwork),
    Mlp(Vec<Linear>),
    Classical(Vec<Classical>),
}

/// A node classifier: a feature extractor followed by a linear head (the
/// AllSet network carries its own head).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    kind: ModelKind,
    body: Body,
    head: Option<Linear>,
    dropout: f64,
    hnhn: crate::propagation::HnhnParams,
    power: f64,
    variant: crate::allset::Variant,
}

/// Per-hypergraph constants a model needs, computed once per dataset.
#[derive(Debug, Clone)]
pub struct GraphContext {
    hypergraph: Hypergraph,
    allset: Option<AllSetGraph>,
    hgnn: Option<HgnnLayer>,
    hnhn: Option<HnhnLayer>,
    hcha: Option<HchaLayer>,
    hypersage: Option<HyperSageLayer>,
}

impl GraphContext {
    pub fn hypergraph(&self) -> &Hypergraph {
        &self.hypergraph
    }
}

/// The AllSet layer specs used by the two AllSet model kinds.
pub fn allset_network_spec(cfg: &TrainConfig, in_width: usize) -> AllSetNetworkSpec {
    let h = cfg.hidden;
    let mut width = if cfg.input_projection { h } else { in_width };
    let mut layers = Vec::with_capacity(cfg.layers);
    for _ in 0..cfg.layers {
        let f = |w: usize| match cfg.model {
            ModelKind::AllsetDeepsets => MultisetFunctionSpec::new(AggregatorSpec::DeepSets {
                inner: MlpSpec::new(vec![w, h, h], Activation::Relu, true),
                outer: MlpSpec::new(vec![h, h, h], Activation::Relu, true),
            }),
            _ => MultisetFunctionSpec::new(AggregatorSpec::SetTransformer(SetTransformerSpec::new(
                cfg.heads,
                h / cfg.heads,
            ))),
        };
        layers.push(AllSetLayerSpec {
            v2e: f(width),
            e2v: f(h),
            variant: cfg.variant,
        });
        width = h;
    }
    let spec = AllSetNetworkSpec::new(layers, Activation::Relu, cfg.dropout);
    if cfg.input_projection {
        spec.with_input(MlpSpec::new(vec![in_width, h], Activation::Relu, true))
    } else {
        spec
    }
}

impl Model {
    /// Builds the architecture named by `cfg` and registers its parameters.
    pub fn new(cfg: &TrainConfig, in_width: usize, classes: usize, params: &mut ParamSet, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let h = cfg.hidden;
        let widths = |i: usize| if i == 0 { in_width } else { h };
        let (body, head) = match cfg.model {
            ModelKind::AllsetTransformer | ModelKind::AllsetDeepsets => {
                let net = AllSetNetwork::new(params, &allset_network_spec(cfg, in_width), in_width, classes, rng)?;
                (Body::AllSet(net), None)
            }
            ModelKind::Mlp => {
                let layers = (0..cfg.layers)
                    .map(|i| Linear::new(params, &format!("mlp{i}"), widths(i), h, true, rng))
                    .collect();
                (Body::Mlp(layers), Some(Linear::new(params, "classifier", h, classes, true, rng)))
            }
            kind => {
                let layers = (0..cfg.layers)
                    .map(|i| {
                        let name = format!("{}{i}", kind.name());
                        let w = widths(i);
                        match kind {
                            ModelKind::Hgnn => Classical::Hgnn {
                                theta: params.xavier(format!("{name}.theta"), w, h, rng),
                                bias: params.zeros(format!("{name}.bias"), 1, h),
                            },
                            ModelKind::Hnhn => Classical::Hnhn {
                                theta_e: params.xavier(format!("{name}.theta_e"), w, h, rng),
                                bias_e: params.zeros(format!("{name}.bias_e"), 1, h),
                                theta_v: params.xavier(format!("{name}.theta_v"), h, h, rng),
                                bias_v: params.zeros(format!("{name}.bias_v"), 1, h),
                            },
                            ModelKind::Hcha => Classical::Hcha {
                                theta: params.xavier(format!("{name}.theta"), w, h, rng),
                                bias: params.zeros(format!("{name}.bias"), 1, h),
                            },
                            ModelKind::Hypergcn => Classical::HyperGcn {
                                theta: params.xavier(format!("{name}.theta"), w, h, rng),
                                bias: params.zeros(format!("{name}.bias"), 1, h),
                            },
                            _ => Classical::HyperSage {
                                theta: params.xavier(format!("{name}.theta"), w, h, rng),
                            },
                        }
                    })
                    .collect();
                (Body::Classical(layers), Some(Linear::new(params, "classifier", h, classes, true, rng)))
            }
        };
        Ok(Self {
            kind: cfg.model,
            body,
            head,
            dropout: cfg.dropout,
            hnhn: cfg.hnhn,
            power: cfg.hypersage_power,
            variant: cfg.variant,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Precomputes the operators this model reads.
    pub fn prepare(&self, hg: &Hypergraph) -> Result<GraphContext> {
        let k = self.kind;
        let allset = match &self.body {
            Body::AllSet(_) => Some(AllSetGraph::for_variant(hg, self.variant)?),
            _ => None,
        };
        let hypergraph = if k == ModelKind::Hypergcn {
            without_singletons(hg)?
        } else {
            hg.clone()
        };
        Ok(GraphContext {
            hypergraph,
            allset,
            hgnn: (k == ModelKind::Hgnn).then(|| HgnnLayer::new(hg)),
            hnhn: (k == ModelKind::Hnhn).then(|| HnhnLayer::new(hg, self.hnhn)).transpose()?,
            hcha: (k == ModelKind::Hcha).then(|| HchaLayer::new(hg)),
            hypersage: (k == ModelKind::Hypersage).then(|| {
                let mut l = HyperSageLayer::new(hg, self.power);
                l.zero_rows = ZeroRowPolicy::Keep;
                l
            }),
        })
    }

    /// Class logits for every node; dropout only when `rng` is given.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, ctx: &GraphContext, x: Var, mut rng: Option<&mut Rng>) -> Result<Var> {
        let drop = |tape: &mut Tape, v: Var, rng: &mut Option<&mut Rng>| -> Result<Var> {
            match rng {
                Some(r) if self.dropout > 0.0 => tape.dropout(v, self.dropout, r),
                _ => Ok(v),
            }
        };
        let act = Activation::Relu;
        let mut h = match &self.body {
            Body::AllSet(net) => {
                let g = ctx.allset.as_ref().expect("context prepared for an AllSet model");
                return net.forward(tape, p, g, x, rng);
            }
            _ => drop(tape, x, &mut rng)?,
        };
        match &self.body {
            Body::AllSet(_) => unreachable!(),
            Body::Mlp(layers) => {
                for l in layers {
                    let y = l.forward(tape, p, h)?;
                    let y = act.apply(tape, y);
                    h = drop(tape, y, &mut rng)?;
                }
            }
            Body::Classical(layers) => {
                for &l in layers {
                    let y = match l {
                        Classical::Hgnn { theta, bias } => {
                            ctx.hgnn.as_ref().expect("hgnn context").forward(tape, h, p[theta], p[bias], act)?
                        }
                        Classical::Hnhn { theta_e, bias_e, theta_v, bias_v } => {
                            let layer = ctx.hnhn.as_ref().expect("hnhn context");
                            layer.forward(tape, h, p[theta_e], p[bias_e], p[theta_v], p[bias_v], act)?.0
                        }
                        Classical::Hcha { theta, bias } => {
                            ctx.hcha.as_ref().expect("hcha context").forward(tape, h, None, p[theta], p[bias], act)?
                        }
                        Classical::HyperGcn { theta, bias } => {
                            hypergcn_layer(tape, &ctx.hypergraph, h, p[theta], p[bias], act)?
                        }
                        Classical::HyperSage { theta } => {
                            ctx.hypersage.as_ref().expect("hypersage context").forward(tape, h, p[theta], act)?
                        }
                    };
                    h = drop(tape, y, &mut rng)?;
                }
            }
        }
        self.head.expect("classical and MLP models have a head").forward(tape, p, h)
    }

    /// Logits without dropout on plain matrices.
    pub fn logits(&self, params: &ParamSet, ctx: &GraphContext, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let p = tape.bind(params);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &p, ctx, xv, None)?;
        Ok(tape.value(y).clone())
    }
}

/// HyperGCN has no mediator for a one-node hyperedge, so those are dropped.
fn without_singletons(hg: &Hypergraph) -> Result<Hypergraph> {
    let keep: Vec<usize> = (0..hg.num_edges()).filter(|&e| hg.edge(e).len() >= 2).collect();
    let edges: Vec<&[usize]> = keep.iter().map(|&e| hg.edge(e)).collect();
    let weights = hg.weights().map(|w| keep.iter().map(|&e| w[e]).collect());
    Hypergraph::from_edge_list(hg.num_nodes(), &edges, weights)
}
