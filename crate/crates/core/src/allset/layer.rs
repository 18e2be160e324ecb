use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Bound, Linear, Mlp, MlpSpec, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::matrix::DenseMatrix;
use crate::rng::Rng;

use super::grouping::{Grouping, Structure, MAX_PAIR_STATES};
use super::multiset::{MultisetFunction, MultisetFunctionSpec};

/// Whether the hyperedge state is shared by all members or kept per
/// incidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// One state per hyperedge, aggregated over all members.
    #[default]
    Shared,
    /// One state per incidence `(v, e)`, aggregated over `e ∖ {v}`.
    PerAggregator,
}

/// The groupings of one hypergraph for both variants.
#[derive(Debug, Clone)]
pub struct AllSetGraph {
    num_nodes: usize,
    num_edges: usize,
    v2e: Grouping,
    e2v: Grouping,
    pairs: Option<(Grouping, Grouping)>,
}

impl AllSetGraph {
    /// Shared-variant groupings only.
    pub fn new(hg: &Hypergraph) -> Self {
        let s = Arc::new(Structure::of(hg));
        Self {
            num_nodes: hg.num_nodes(),
            num_edges: hg.num_edges(),
            v2e: Grouping::node_to_edge(hg, s.clone()),
            e2v: Grouping::edge_to_node(hg, s),
            pairs: None,
        }
    }

    /// Also materializes the per-incidence groupings, refusing instances with
    /// more than `limit` pair states.
    pub fn with_pairs(hg: &Hypergraph, limit: usize) -> Result<Self> {
        let mut g = Self::new(hg);
        let s = g.v2e.structure.clone().expect("hypergraph grouping");
        g.pairs = Some(Grouping::pairs(hg, s, limit)?);
        Ok(g)
    }

    pub fn for_variant(hg: &Hypergraph, variant: Variant) -> Result<Self> {
        match variant {
            Variant::Shared => Ok(Self::new(hg)),
            Variant::PerAggregator => Self::with_pairs(hg, MAX_PAIR_STATES),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    /// Node-to-hyperedge and hyperedge-to-node groupings of a variant.
    pub fn groupings(&self, variant: Variant) -> Result<(&Grouping, &Grouping)> {
        match variant {
            Variant::Shared => Ok((&self.v2e, &self.e2v)),
            Variant::PerAggregator => self
                .pairs
                .as_ref()
                .map(|(a, b)| (a, b))
                .ok_or_else(|| Error::InvalidConfig("per-incidence groupings were not built".into())),
        }
    }

    /// The same groupings with every multiset in random order.
    pub fn shuffled(&self, rng: &mut Rng) -> Self {
        Self {
            num_nodes: self.num_nodes,
            num_edges: self.num_edges,
            v2e: self.v2e.shuffled(rng),
            e2v: self.e2v.shuffled(rng),
            pairs: self.pairs.as_ref().map(|(a, b)| (a.shuffled(rng), b.shuffled(rng))),
        }
    }

    /// Rows of the hyperedge state for a variant.
    pub fn edge_rows(&self, variant: Variant) -> Result<usize> {
        Ok(self.groupings(variant)?.0.num_groups())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllSetLayerSpec {
    pub v2e: MultisetFunctionSpec,
    pub e2v: MultisetFunctionSpec,
    #[serde(default)]
    pub variant: Variant,
}

/// `Z = f_V→E(X; Z_prev)`, `X' = f_E→V(Z; X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllSetLayer {
    pub v2e: MultisetFunction,
    pub e2v: MultisetFunction,
    pub variant: Variant,
}

impl AllSetLayer {
    /// `edge_width` is the width of the previous hyperedge state, needed only
    /// when the node-to-hyperedge function reads it.
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        spec: &AllSetLayerSpec,
        node_width: usize,
        edge_width: Option<usize>,
        rng: &mut Rng,
    ) -> Result<Self> {
        let v2e = MultisetFunction::new(params, &format!("{name}.v2e"), &spec.v2e, node_width, edge_width, rng)?;
        let e2v = MultisetFunction::new(params, &format!("{name}.e2v"), &spec.e2v, v2e.out_width(), Some(node_width), rng)?;
        Ok(Self {
            v2e,
            e2v,
            variant: spec.variant,
        })
    }

    pub fn out_width(&self) -> usize {
        self.e2v.out_width()
    }

    pub fn node_to_edge(&self, tape: &mut Tape, p: &Bound, g: &AllSetGraph, x: Var, z_prev: Option<Var>) -> Result<Var> {
        let (v2e, _) = g.groupings(self.variant)?;
        self.v2e.forward(tape, p, v2e, x, z_prev)
    }

    pub fn edge_to_node(&self, tape: &mut Tape, p: &Bound, g: &AllSetGraph, z: Var, x: Var) -> Result<Var> {
        let (_, e2v) = g.groupings(self.variant)?;
        self.e2v.forward(tape, p, e2v, z, Some(x))
    }

    /// Returns `(X', Z)`.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, g: &AllSetGraph, x: Var, z_prev: Option<Var>) -> Result<(Var, Var)> {
        let z = self.node_to_edge(tape, p, g, x, z_prev)?;
        let y = self.edge_to_node(tape, p, g, z, x)?;
        Ok((y, z))
    }

    /// Evaluates on plain matrices, returning `(X', Z)`.
    pub fn apply(
        &self,
        params: &ParamSet,
        g: &AllSetGraph,
        x: &DenseMatrix,
        z_prev: Option<&DenseMatrix>,
    ) -> Result<(DenseMatrix, DenseMatrix)> {
        let mut tape = Tape::new();
        let p = tape.bind(params);
        let xv = tape.constant(x.clone());
        let zv = z_prev.map(|z| tape.constant(z.clone()));
        let (y, z) = self.forward(&mut tape, &p, g, xv, zv)?;
        Ok((tape.value(y).clone(), tape.value(z).clone()))
    }
}

/// Architecture of an [`AllSetNetwork`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllSetNetworkSpec {
    /// Optional projection of the raw features; its first width must equal
    /// the feature width.
    #[serde(default)]
    pub input: Option<MlpSpec>,
    pub layers: Vec<AllSetLayerSpec>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
}

impl AllSetNetworkSpec {
    pub fn new(layers: Vec<AllSetLayerSpec>, activation: Activation, dropout: f64) -> Self {
        Self {
            input: None,
            layers,
            activation,
            dropout,
        }
    }

    pub fn with_input(mut self, input: MlpSpec) -> Self {
        self.input = Some(input);
        self
    }
}

/// Optional input projection, stacked AllSet layers and a linear classifier.
/// The activation (and dropout, when training) follows both halves of every
/// layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllSetNetwork {
    pub input: Option<Mlp>,
    pub layers: Vec<AllSetLayer>,
    pub classifier: Linear,
    pub activation: Activation,
    pub dropout: f64,
}

impl AllSetNetwork {
    pub fn new(
        params: &mut ParamSet,
        spec: &AllSetNetworkSpec,
        in_width: usize,
        classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if spec.layers.is_empty() {
            return Err(Error::InvalidConfig("an AllSet network needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&spec.dropout) {
            return Err(Error::InvalidConfig(format!("dropout must be in [0, 1), got {}", spec.dropout)));
        }
        let input = match &spec.input {
            Some(m) if m.input_width() != in_width => {
                return Err(Error::InvalidConfig(format!(
                    "input projection expects width {}, features have {in_width}",
                    m.input_width()
                )))
            }
            Some(m) => Some(Mlp::new(params, "input", m, rng)?),
            None => None,
        };
        let mut width = input.as_ref().map_or(in_width, Mlp::output_width);
        let mut edge_width = None;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for (i, ls) in spec.layers.iter().enumerate() {
            let layer = AllSetLayer::new(params, &format!("layer{i}"), ls, width, edge_width, rng)?;
            width = layer.out_width();
            edge_width = Some(layer.v2e.out_width());
            layers.push(layer);
        }
        let classifier = Linear::new(params, "classifier", width, classes, true, rng);
        Ok(Self {
            input,
            layers,
            classifier,
            activation: spec.activation,
            dropout: spec.dropout,
        })
    }

    /// Class logits for every node. Dropout is applied only when `rng` is
    /// given.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, g: &AllSetGraph, x: Var, mut rng: Option<&mut Rng>) -> Result<Var> {
        let step = |tape: &mut Tape, v: Var, rng: &mut Option<&mut Rng>| -> Result<Var> {
            let v = self.activation.apply(tape, v);
            match rng {
                Some(r) if self.dropout > 0.0 => tape.dropout(v, self.dropout, r),
                _ => Ok(v),
            }
        };
        let mut x = match rng.as_deref_mut() {
            Some(r) if self.dropout > 0.0 => tape.dropout(x, self.dropout, r)?,
            _ => x,
        };
        if let Some(m) = &self.input {
            x = m.forward(tape, p, x)?;
        }
        let mut z_prev = None;
        for layer in &self.layers {
            let z = layer.node_to_edge(tape, p, g, x, z_prev)?;
            let z = step(tape, z, &mut rng)?;
            let y = layer.edge_to_node(tape, p, g, z, x)?;
            x = step(tape, y, &mut rng)?;
            z_prev = Some(z);
        }
        self.classifier.forward(tape, p, x)
    }

    /// Logits on plain matrices, without dropout.
    pub fn apply(&self, params: &ParamSet, g: &AllSetGraph, x: &DenseMatrix) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let p = tape.bind(params);
        let xv = tape.constant(x.clone());
        let y = self.forward(&mut tape, &p, g, xv, None)?;
        Ok(tape.value(y).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allset::multiset::{AggregatorSpec, PostSpec, SetTransformerSpec};

    #[test]
    fn per_incidence_guard() {
        let edges = vec![(0..40).collect::<Vec<_>>()];
        let hg = Hypergraph::from_edge_list(40, &edges, None).unwrap();
        assert_eq!(AllSetGraph::with_pairs(&hg, 1000).unwrap_err().kind(), "InstanceTooLarge");
        let g = AllSetGraph::new(&hg);
        assert_eq!(g.groupings(Variant::PerAggregator).unwrap_err().kind(), "InvalidConfig");
        assert_eq!(g.edge_rows(Variant::Shared).unwrap(), 1);
    }

    #[test]
    fn network_shapes_and_dropout_switch() {
        let hg = Hypergraph::from_edge_list(5, &[vec![0, 1, 2], vec![2, 3], vec![3, 4, 0]], None).unwrap();
        let g = AllSetGraph::new(&hg);
        let st = |w| {
            MultisetFunctionSpec::new(AggregatorSpec::SetTransformer(SetTransformerSpec::new(2, w)))
        };
        let spec = AllSetLayerSpec {
            v2e: st(4),
            e2v: st(4),
            variant: Variant::Shared,
        };
        let mut params = ParamSet::new();
        let mut rng = Rng::new(2);
        let spec = AllSetNetworkSpec::new(vec![spec.clone(), spec], Activation::Relu, 0.5);
        let net = AllSetNetwork::new(&mut params, &spec, 3, 4, &mut rng).unwrap();
        let x = DenseMatrix::filled(5, 3, 0.3);
        let run = |rng: Option<&mut Rng>| {
            let mut tape = Tape::new();
            let p = tape.bind(&params);
            let xv = tape.constant(x.clone());
            let y = net.forward(&mut tape, &p, &g, xv, rng).unwrap();
            tape.value(y).clone()
        };
        let a = run(None);
        assert_eq!(a.shape(), (5, 4));
        assert_eq!(a, run(None));
        assert_ne!(a, run(Some(&mut Rng::new(9))));
    }

    #[test]
    fn all_sum_network_is_repeated_clique_propagation() {
        use crate::propagation::ce_prop_h;
        let hg = Hypergraph::from_edge_list(6, &[vec![0, 1, 2], vec![2, 3], vec![3, 4, 0], vec![1]], None).unwrap();
        let g = AllSetGraph::new(&hg);
        let sum = AllSetLayerSpec {
            v2e: MultisetFunctionSpec::new(AggregatorSpec::Sum),
            e2v: MultisetFunctionSpec::new(AggregatorSpec::Sum),
            variant: Variant::Shared,
        };
        let spec = AllSetNetworkSpec::new(vec![sum; 3], Activation::Identity, 0.0)
            .with_input(MlpSpec::new(vec![2, 2], Activation::Identity, true));
        let mut params = ParamSet::new();
        let mut rng = Rng::new(4);
        let net = AllSetNetwork::new(&mut params, &spec, 2, 3, &mut rng).unwrap();
        let proj = net.input.as_ref().unwrap().layers[0];
        params.set(proj.weight, DenseMatrix::identity(2)).unwrap();
        let head = net.classifier;
        params.set(head.bias.unwrap(), DenseMatrix::from_rows(&[[0.1, -0.2, 0.3]]).unwrap()).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, 0.5], [-2.0, 0.0], [0.25, 3.0], [1.5, -1.0], [0.0, 2.0], [4.0, 4.0]]).unwrap();

        let mut expect = x.clone();
        for _ in 0..3 {
            expect = ce_prop_h(&hg, &expect).unwrap();
        }
        let expect = head.eval(&params, &expect).unwrap();
        let got = net.apply(&params, &g, &x).unwrap();
        assert_eq!(got.shape(), (6, 3));
        assert!(got.max_rel_diff(&expect, 1.0) < 1e-12);
    }

    #[test]
    fn layer_widths_chain() {
        let spec = AllSetLayerSpec {
            v2e: MultisetFunctionSpec::new(AggregatorSpec::Mean).with_post(PostSpec::Affine {
                out: 7,
                activation: Activation::Relu,
                bias: true,
            }),
            e2v: MultisetFunctionSpec::new(AggregatorSpec::Sum),
            variant: Variant::Shared,
        };
        let mut params = ParamSet::new();
        let layer = AllSetLayer::new(&mut params, "l", &spec, 3, None, &mut Rng::new(0)).unwrap();
        assert_eq!(layer.out_width(), 7);
        let net_spec = AllSetNetworkSpec::new(vec![spec], Activation::Relu, 1.0);
        let bad = AllSetNetwork::new(&mut params, &net_spec, 3, 2, &mut Rng::new(0));
        assert_eq!(bad.unwrap_err().kind(), "InvalidConfig");
        let net_spec = AllSetNetworkSpec {
            dropout: 0.0,
            ..net_spec
        }
        .with_input(MlpSpec::new(vec![4, 3], Activation::Relu, true));
        let bad = AllSetNetwork::new(&mut params, &net_spec, 3, 2, &mut Rng::new(0));
        assert_eq!(bad.unwrap_err().kind(), "InvalidConfig");
    }
}
