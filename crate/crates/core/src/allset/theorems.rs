//! AllSet instantiations that reproduce classical propagation rules, checked
//! against independent implementations on random instances.

use serde::Serialize;

use crate::autodiff::{Activation, MlpSpec, ParamSet, Tape};
use crate::error::Result;
use crate::hypergraph::Hypergraph;
use crate::matrix::DenseMatrix;
use crate::propagation::{ce_prop_a, ce_prop_h, z_prop, HgnnLayer, HnhnLayer, HnhnNormalizer, HnhnParams, HyperSageLayer};
use crate::rng::Rng;

use super::layer::{AllSetGraph, AllSetLayer, AllSetLayerSpec, Variant};
use super::multiset::{AggregatorSpec, MultisetFunctionSpec, PostSpec, SecondArg, WeightRule};

/// Largest deviation tolerated between an AllSet instantiation and the rule
/// it reproduces.
pub const EQUIVALENCE_TOLERANCE: f64 = 1e-10;

const FEATURES: usize = 3;
const HIDDEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    /// Sum over members, then over incident hyperedges.
    CliqueIncidence,
    /// Sum over the other members, then over incident hyperedges.
    CliqueAdjacency,
    /// Scaled product over the other members on uniform hypergraphs.
    TensorProduct,
    Hgnn,
    Hnhn,
    HyperSage,
    /// Message passing on ordinary graphs.
    MessagePassing,
}

impl Case {
    pub const ALL: [Case; 7] = [
        Case::CliqueIncidence,
        Case::CliqueAdjacency,
        Case::TensorProduct,
        Case::Hgnn,
        Case::Hnhn,
        Case::HyperSage,
        Case::MessagePassing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Case::CliqueIncidence => "ce-prop-h",
            Case::CliqueAdjacency => "ce-prop-a",
            Case::TensorProduct => "z-prop",
            Case::Hgnn => "hgnn",
            Case::Hnhn => "hnhn",
            Case::HyperSage => "hypersage",
            Case::MessagePassing => "mpnn",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub case: Case,
    pub instances: usize,
    /// Largest `max|a − b| / max(max|a|, max|b|, 1)` over all instances.
    pub max_deviation: f64,
}

impl CaseReport {
    pub fn passed(&self) -> bool {
        self.max_deviation < EQUIVALENCE_TOLERANCE
    }
}

/// A hypergraph with 2 to `max_nodes` nodes and 1 to 8 hyperedges of size
/// 1 to `max_size`.
pub fn random_hypergraph(rng: &mut Rng, max_nodes: usize, max_size: usize) -> Hypergraph {
    let n = 2 + rng.index(max_nodes.max(2) - 1);
    let m = 1 + rng.index(8);
    let edges: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            let size = 1 + rng.index(max_size.min(n));
            rng.permutation(n)[..size].to_vec()
        })
        .collect();
    Hypergraph::from_edge_list(n, &edges, None).expect("valid by construction")
}

/// A `d`-uniform hypergraph with `d` to `max_nodes` nodes.
pub fn random_uniform_hypergraph(rng: &mut Rng, d: usize, max_nodes: usize) -> Hypergraph {
    let n = d + rng.index(max_nodes.saturating_sub(d) + 1);
    let m = 1 + rng.index(8);
    let edges: Vec<Vec<usize>> = (0..m).map(|_| rng.permutation(n)[..d].to_vec()).collect();
    Hypergraph::from_edge_list(n, &edges, None).expect("valid by construction")
}

/// An Erdős–Rényi graph with 2 to `max_nodes` nodes, as a 2-uniform
/// hypergraph.
pub fn random_graph(rng: &mut Rng, max_nodes: usize, p: f64) -> Hypergraph {
    let n = 2 + rng.index(max_nodes.max(2) - 1);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.bernoulli(p) {
                edges.push(vec![i, j]);
            }
        }
    }
    Hypergraph::from_edge_list(n, &edges, None).expect("valid by construction")
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> DenseMatrix {
    DenseMatrix::new(rows, cols, (0..rows * cols).map(|_| rng.uniform(lo, hi)).collect()).expect("sized")
}

fn deviation(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.max_rel_diff(b, 1.0)
}

fn layer(params: &mut ParamSet, v2e: MultisetFunctionSpec, e2v: MultisetFunctionSpec, variant: Variant, rng: &mut Rng) -> Result<AllSetLayer> {
    let spec = AllSetLayerSpec { v2e, e2v, variant };
    AllSetLayer::new(params, "layer", &spec, FEATURES, None, rng)
}

fn affine(out: usize) -> PostSpec {
    PostSpec::Affine {
        out,
        activation: Activation::Relu,
        bias: true,
    }
}

/// Replaces the bias of an affine post map with random values.
fn randomize_bias(params: &mut ParamSet, f: &super::multiset::MultisetFunction, rng: &mut Rng) {
    if let Some(b) = f.post_linear().and_then(|l| l.bias) {
        let (r, c) = params.get(b).shape();
        params.set(b, random_matrix(rng, r, c, -0.5, 0.5)).expect("same shape");
    }
}

/// Checks one case on `instances` random instances with at most 12 nodes.
pub fn check_case(case: Case, seed: u64, instances: usize) -> Result<CaseReport> {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let d = match case {
            Case::CliqueIncidence | Case::CliqueAdjacency | Case::Hgnn | Case::Hnhn | Case::HyperSage => {
                check_instance(case, &mut rng, 0)?
            }
            Case::TensorProduct => {
                let order = 2 + rng.index(3);
                check_instance(case, &mut rng, order)?
            }
            Case::MessagePassing => check_instance(case, &mut rng, 2)?,
        };
        worst = worst.max(d);
    }
    Ok(CaseReport {
        case,
        instances,
        max_deviation: worst,
    })
}

fn check_instance(case: Case, rng: &mut Rng, order: usize) -> Result<f64> {
    let mut params = ParamSet::new();
    match case {
        Case::CliqueIncidence | Case::CliqueAdjacency => {
            let hg = random_hypergraph(rng, 12, 5);
            let x = random_matrix(rng, hg.num_nodes(), FEATURES, -1.0, 1.0);
            let (variant, oracle) = if case == Case::CliqueIncidence {
                (Variant::Shared, ce_prop_h(&hg, &x)?)
            } else {
                (Variant::PerAggregator, ce_prop_a(&hg, &x)?)
            };
            let sum = || MultisetFunctionSpec::new(AggregatorSpec::Sum);
            let l = layer(&mut params, sum(), sum(), variant, rng)?;
            let g = AllSetGraph::for_variant(&hg, variant)?;
            Ok(deviation(&l.apply(&params, &g, &x, None)?.0, &oracle))
        }
        Case::TensorProduct => {
            let hg = random_uniform_hypergraph(rng, order, 12);
            let x = random_matrix(rng, hg.num_nodes(), FEATURES, -1.0, 1.0);
            let l = layer(
                &mut params,
                MultisetFunctionSpec::new(AggregatorSpec::ScaledProduct),
                MultisetFunctionSpec::new(AggregatorSpec::Sum),
                Variant::PerAggregator,
                rng,
            )?;
            let g = AllSetGraph::for_variant(&hg, Variant::PerAggregator)?;
            Ok(deviation(&l.apply(&params, &g, &x, None)?.0, &z_prop(&hg, &x, order)?))
        }
        Case::Hgnn => {
            let base = random_hypergraph(rng, 12, 5);
            let weights: Vec<f64> = (0..base.num_edges()).map(|_| rng.uniform(0.5, 2.0)).collect();
            let hg = Hypergraph::from_edge_list(base.num_nodes(), base.edges(), Some(weights))?;
            let x = random_matrix(rng, hg.num_nodes(), FEATURES, -1.0, 1.0);
            let l = layer(
                &mut params,
                MultisetFunctionSpec::new(AggregatorSpec::Weighted(WeightRule::HgnnNodeToEdge)),
                MultisetFunctionSpec::new(AggregatorSpec::Weighted(WeightRule::HgnnEdgeToNode)).with_post(affine(HIDDEN)),
                Variant::Shared,
                rng,
            )?;
            randomize_bias(&mut params, &l.e2v, rng);
            let g = AllSetGraph::new(&hg);
            let got = l.apply(&params, &g, &x, None)?.0;
            let post = l.e2v.post_linear().expect("affine");
            let mut t = Tape::new();
            let xv = t.constant(x);
            let theta = t.constant(params.get(post.weight).clone());
            let bias = t.constant(params.get(post.bias.expect("bias")).clone());
            let y = HgnnLayer::new(&hg).forward(&mut t, xv, theta, bias, Activation::Relu)?;
            Ok(deviation(&got, t.value(y)))
        }
        Case::Hnhn => {
            let hg = random_hypergraph(rng, 12, 5);
            let x = random_matrix(rng, hg.num_nodes(), FEATURES, -1.0, 1.0);
            let hp = HnhnParams {
                alpha: rng.uniform(-1.0, 1.0),
                beta: rng.uniform(-1.0, 1.0),
                normalizer: if rng.bernoulli(0.5) {
                    HnhnNormalizer::NodeDegree
                } else {
                    HnhnNormalizer::EdgeCardinality
                },
            };
            let l = layer(
                &mut params,
                MultisetFunctionSpec::new(AggregatorSpec::Weighted(WeightRule::HnhnNodeToEdge { beta: hp.beta }))
                    .with_post(affine(HIDDEN)),
                MultisetFunctionSpec::new(AggregatorSpec::Weighted(WeightRule::HnhnEdgeToNode {
                    alpha: hp.alpha,
                    normalizer: hp.normalizer,
                }))
                .with_post(affine(HIDDEN)),
                Variant::Shared,
                rng,
            )?;
            randomize_bias(&mut params, &l.v2e, rng);
            randomize_bias(&mut params, &l.e2v, rng);
            let g = AllSetGraph::new(&hg);
            let (got_x, got_z) = l.apply(&params, &g, &x, None)?;
            let (pe, pv) = (l.v2e.post_linear().expect("affine"), l.e2v.post_linear().expect("affine"));
            let mut t = Tape::new();
            let xv = t.constant(x);
            let mut c = |id| t.constant(params.get(id).clone());
            let (te, be) = (c(pe.weight), c(pe.bias.expect("bias")));
            let (tv, bv) = (c(pv.weight), c(pv.bias.expect("bias")));
            let (y, z) = HnhnLayer::new(&hg, hp)?.forward(&mut t, xv, te, be, tv, bv, Activation::Relu)?;
            Ok(deviation(&got_x, t.value(y)).max(deviation(&got_z, t.value(z))))
        }
        Case::HyperSage => {
            let hg = random_hypergraph(rng, 12, 5);
            let x = random_matrix(rng, hg.num_nodes(), FEATURES, 0.1, 1.0);
            let p = [1.0, 1.5, 2.0, 3.0][rng.index(4)];
            let l = layer(
                &mut params,
                MultisetFunctionSpec::new(AggregatorSpec::PowerMean { p }),
                MultisetFunctionSpec::new(AggregatorSpec::PowerMean { p })
                    .with_second(SecondArg::Add)
                    .with_post(PostSpec::UnitNormAffine {
                        out: HIDDEN,
                        activation: Activation::Relu,
                        zero_rows: Default::default(),
                    }),
                Variant::Shared,
                rng,
            )?;
            let g = AllSetGraph::new(&hg);
            let got = l.apply(&params, &g, &x, None)?.0;
            let mut t = Tape::new();
            let xv = t.constant(x);
            let theta = t.constant(params.get(l.e2v.post_linear().expect("affine").weight).clone());
            let y = HyperSageLayer::new(&hg, p).forward(&mut t, xv, theta, Activation::Relu)?;
            Ok(deviation(&got, t.value(y)))
        }
        Case::MessagePassing => {
            let hg = random_graph(rng, 12, 0.3);
            let x = random_matrix(rng, hg.num_nodes(), FEATURES, -1.0, 1.0);
            let message = MlpSpec::new(vec![2 * FEATURES, HIDDEN, HIDDEN], Activation::Relu, true);
            let update = MlpSpec::new(vec![FEATURES + HIDDEN, HIDDEN, HIDDEN], Activation::Relu, true);
            let l = layer(
                &mut params,
                MultisetFunctionSpec::new(AggregatorSpec::Sum),
                MultisetFunctionSpec::new(AggregatorSpec::Message { message, update }),
                Variant::PerAggregator,
                rng,
            )?;
            let g = AllSetGraph::for_variant(&hg, Variant::PerAggregator)?;
            let got = l.apply(&params, &g, &x, None)?.0;
            let (m, u) = l.e2v.message_mlps().expect("message aggregator");
            let oracle = mpnn_reference(&hg, &x, |r| m.eval(&params, r), |r| u.eval(&params, r))?;
            Ok(deviation(&got, &oracle))
        }
    }
}

/// `X'_v = U(X_v ∥ Σ_{u∼v} M(X_u ∥ X_v))` evaluated neighbor by neighbor.
fn mpnn_reference(
    hg: &Hypergraph,
    x: &DenseMatrix,
    message: impl Fn(&DenseMatrix) -> Result<DenseMatrix>,
    update: impl Fn(&DenseMatrix) -> Result<DenseMatrix>,
) -> Result<DenseMatrix> {
    let n = hg.num_nodes();
    let mut neighbors = vec![Vec::new(); n];
    for e in hg.edges() {
        neighbors[e[0]].push(e[1]);
        neighbors[e[1]].push(e[0]);
    }
    let mut rows = Vec::with_capacity(n);
    for v in 0..n {
        let mut acc: Option<Vec<f64>> = None;
        for &u in &neighbors[v] {
            let input = DenseMatrix::from_rows(&[[x.row(u), x.row(v)].concat()])?;
            let msg = message(&input)?;
            match &mut acc {
                Some(a) => a.iter_mut().zip(msg.row(0)).for_each(|(a, m)| *a += m),
                None => acc = Some(msg.row(0).to_vec()),
            }
        }
        let sum = acc.unwrap_or_else(|| vec![0.0; HIDDEN]);
        let input = DenseMatrix::from_rows(&[[x.row(v), &sum[..]].concat()])?;
        rows.push(update(&input)?.row(0).to_vec());
    }
    DenseMatrix::from_rows(&rows)
}

/// A product aggregator separates two inputs that every linear clique-style
/// operator confuses.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    /// Deviation of the product instantiation from the tensor rule.
    pub product_deviation: f64,
    /// Relative residual `‖Y − (a·P x + b)‖ / ‖Y‖` of the best least-squares
    /// fit of the tensor rule by a scaled HGNN operator plus offset.
    pub linear_residual: f64,
}

/// The fixed instance `{0,1,2}, {1,2,3}` with `x = (1, 2, 3, 4)`.
pub fn expressiveness_witness() -> Result<Witness> {
    let hg = Hypergraph::from_edge_list(4, &[vec![0, 1, 2], vec![1, 2, 3]], None)?;
    let x = DenseMatrix::column(&[1.0, 2.0, 3.0, 4.0])?;
    let target = z_prop(&hg, &x, 3)?;
    let mut params = ParamSet::new();
    let l = layer_with_width(&mut params, 1)?;
    let g = AllSetGraph::for_variant(&hg, Variant::PerAggregator)?;
    let got = l.apply(&params, &g, &x, None)?.0;
    let px = HgnnLayer::new(&hg).operator().mul_dense(&x);
    let y = target.data();
    let f = px.data();
    let n = y.len() as f64;
    let (sf, sy) = (f.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sff: f64 = f.iter().map(|v| v * v).sum();
    let sfy: f64 = f.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sff - sf * sf;
    let a = (n * sfy - sf * sy) / det;
    let b = (sy - a * sf) / n;
    let resid: f64 = f.iter().zip(y).map(|(fi, yi)| (yi - a * fi - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(Witness {
        product_deviation: deviation(&got, &target),
        linear_residual: resid / norm,
    })
}

fn layer_with_width(params: &mut ParamSet, width: usize) -> Result<AllSetLayer> {
    let spec = AllSetLayerSpec {
        v2e: MultisetFunctionSpec::new(AggregatorSpec::ScaledProduct),
        e2v: MultisetFunctionSpec::new(AggregatorSpec::Sum),
        variant: Variant::PerAggregator,
    };
    AllSetLayer::new(params, "layer", &spec, width, None, &mut Rng::new(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_case_holds_on_fifty_instances() {
        for (i, case) in Case::ALL.into_iter().enumerate() {
            let report = check_case(case, 100 + i as u64, 50).unwrap();
            assert!(report.passed(), "{report:?}");
        }
    }

    #[test]
    fn sum_cases_are_tight() {
        for case in [Case::CliqueIncidence, Case::CliqueAdjacency, Case::MessagePassing] {
            let report = check_case(case, 7, 50).unwrap();
            assert!(report.max_deviation < 1e-12, "{report:?}");
        }
    }

    #[test]
    fn witness_separates() {
        let w = expressiveness_witness().unwrap();
        assert!(w.product_deviation < 1e-12, "{w:?}");
        assert!(w.linear_residual > 0.1, "{w:?}");
    }

    #[test]
    fn generators_respect_bounds() {
        let mut rng = Rng::new(5);
        for _ in 0..100 {
            let hg = random_hypergraph(&mut rng, 12, 5);
            assert!((2..=12).contains(&hg.num_nodes()));
            assert!(hg.edge_sizes().iter().all(|&s| (1..=5).contains(&s)));
            let u = random_uniform_hypergraph(&mut rng, 3, 12);
            assert_eq!(u.uniform_order(), Some(3));
            assert!(u.num_nodes() <= 12);
            let g = random_graph(&mut rng, 12, 0.3);
            assert!(g.edge_sizes().iter().all(|&s| s == 2));
        }
    }
}
