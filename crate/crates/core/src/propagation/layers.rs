//! Learnable hypergraph layers written directly in their node-wise form.
//!
//! Each layer precomputes its constant operators once per hypergraph and then
//! evaluates on a [`Tape`], so the same code serves training and gradient
//! checks. None of them share code with the multiset-function layers, which
//! lets each act as an oracle for the other.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Tape, Var};
use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::matrix::DenseMatrix;
use crate::sparse::CsrMatrix;

fn check_rows(tape: &Tape, op: &'static str, x: Var, n: usize) -> Result<()> {
    let rows = tape.shape(x).0;
    if rows != n {
        return Err(Error::shape(op, format!("{rows} feature rows for {n} nodes")));
    }
    Ok(())
}

/// 1 for nodes with at least one incident hyperedge, 0 otherwise.
fn degree_mask(hg: &Hypergraph) -> Vec<f64> {
    (0..hg.num_nodes())
        .map(|v| if hg.degree(v) > 0 { 1.0 } else { 0.0 })
        .collect()
}

fn affine(tape: &mut Tape, h: Var, theta: Var, bias: Option<Var>) -> Result<Var> {
    let y = tape.matmul(h, theta)?;
    match bias {
        Some(b) => tape.add_row(y, b),
        None => Ok(y),
    }
}

/// `X'_v = σ([d_v^{-1/2} Σ_{e∋v} (w_e/|e|) Σ_{u∈e} d_u^{-1/2} X_u] Θ + b)`.
#[derive(Debug, Clone)]
pub struct HgnnLayer {
    operator: Arc<CsrMatrix>,
    mask: Vec<f64>,
}

impl HgnnLayer {
    pub fn new(hg: &Hypergraph) -> Self {
        let inv_sqrt: Vec<f64> = hg
            .degrees()
            .iter()
            .map(|&d| if d > 0 { 1.0 / (d as f64).sqrt() } else { 0.0 })
            .collect();
        let rows = (0..hg.num_nodes()).map(|v| {
            let mut row = Vec::new();
            for &e in hg.node_edges(v) {
                let members = hg.edge(e);
                let c = inv_sqrt[v] * hg.weight(e) / members.len() as f64;
                row.extend(members.iter().map(|&u| (u, c * inv_sqrt[u])));
            }
            row
        });
        Self {
            operator: Arc::new(CsrMatrix::from_rows(hg.num_nodes(), rows)),
            mask: degree_mask(hg),
        }
    }

    /// The `n × n` propagation matrix.
    pub fn operator(&self) -> &CsrMatrix {
        &self.operator
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, theta: Var, bias: Var, act: Activation) -> Result<Var> {
        check_rows(tape, "hgnn_layer", x, self.mask.len())?;
        let h = tape.spmm(self.operator.clone(), x)?;
        let y = affine(tape, h, theta, Some(bias))?;
        let y = act.apply(tape, y);
        tape.scale_rows(y, &self.mask)
    }
}

/// HGNN layer with ReLU; zero-degree nodes produce zero rows.
pub fn hgnn_layer(tape: &mut Tape, hg: &Hypergraph, x: Var, theta: Var, bias: Var) -> Result<Var> {
    HgnnLayer::new(hg).forward(tape, x, theta, bias, Activation::Relu)
}

/// Attention-weighted hypergraph convolution:
/// `X'_v = σ([d_v^{-1} Σ_{e∋v} (w_e α_ve/|e|) Σ_{u∈e} α_ue X_u] Θ + b)` with
/// `α_ue` a softmax over the hyperedges containing `u` of
/// `LeakyReLU(aᵀ[X_u ∥ Z_e])`. Without hyperedge features every `α_ue` is
/// `1/d_u`.
#[derive(Debug, Clone)]
pub struct HchaLayer {
    /// Node of each incidence, node-major.
    inc_node: Vec<usize>,
    /// Hyperedge of each incidence, node-major.
    inc_edge: Vec<usize>,
    node_offsets: Arc<Vec<usize>>,
    edge_sum: Arc<CsrMatrix>,
    node_sum: Arc<CsrMatrix>,
    /// `w_e / (|e| d_v)` per incidence.
    outer_coeff: Vec<f64>,
    uniform_alpha: Vec<f64>,
    mask: Vec<f64>,
    num_edges: usize,
}

impl HchaLayer {
    pub fn new(hg: &Hypergraph) -> Self {
        let mut inc_node = Vec::with_capacity(hg.num_incidences());
        let mut inc_edge = Vec::with_capacity(hg.num_incidences());
        let mut node_offsets = vec![0];
        let mut outer_coeff = Vec::new();
        let mut uniform_alpha = Vec::new();
        let mut by_edge: Vec<Vec<(usize, f64)>> = vec![Vec::new(); hg.num_edges()];
        for v in 0..hg.num_nodes() {
            let dv = hg.degree(v) as f64;
            for &e in hg.node_edges(v) {
                by_edge[e].push((inc_node.len(), 1.0));
                inc_node.push(v);
                inc_edge.push(e);
                outer_coeff.push(hg.weight(e) / (hg.edge(e).len() as f64 * dv));
                uniform_alpha.push(1.0 / dv);
            }
            node_offsets.push(inc_node.len());
        }
        let node_sum = CsrMatrix::segment_sum(&node_offsets);
        Self {
            inc_node,
            inc_edge,
            node_offsets: Arc::new(node_offsets),
            edge_sum: Arc::new(CsrMatrix::from_rows(hg.num_incidences(), by_edge)),
            node_sum: Arc::new(node_sum),
            outer_coeff,
            uniform_alpha,
            mask: degree_mask(hg),
            num_edges: hg.num_edges(),
        }
    }

    /// Attention weights per incidence (node-major order), as an `I × 1`
    /// column.
    pub fn attention(&self, tape: &mut Tape, x: Var, edge_attn: Option<(Var, Var)>) -> Result<Var> {
        let Some((z, a)) = edge_attn else {
            return Ok(tape.constant(DenseMatrix::from_raw(
                self.uniform_alpha.len(),
                1,
                self.uniform_alpha.clone(),
            )));
        };
        if tape.shape(z).0 != self.num_edges {
            return Err(Error::shape(
                "hcha_layer",
                format!("{} hyperedge feature rows for {} hyperedges", tape.shape(z).0, self.num_edges),
            ));
        }
        let xu = tape.gather_rows(x, &self.inc_node)?;
        let ze = tape.gather_rows(z, &self.inc_edge)?;
        let cat = tape.concat_cols(&[xu, ze])?;
        let score = tape.matmul(cat, a)?;
        let score = tape.leaky_relu(score, crate::autodiff::LEAKY_SLOPE);
        tape.segment_softmax(score, self.node_offsets.clone())
    }

    /// `edge_attn` is `(Z, a)`: hyperedge features and the attention vector
    /// of length `F + F_e`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        edge_attn: Option<(Var, Var)>,
        theta: Var,
        bias: Var,
        act: Activation,
    ) -> Result<Var> {
        check_rows(tape, "hcha_layer", x, self.mask.len())?;
        let alpha = self.attention(tape, x, edge_attn)?;
        let xu = tape.gather_rows(x, &self.inc_node)?;
        let weighted = tape.mul_col(xu, alpha)?;
        let z = tape.spmm(self.edge_sum.clone(), weighted)?;
        let ze = tape.gather_rows(z, &self.inc_edge)?;
        let coeff = tape.scale_rows(alpha, &self.outer_coeff)?;
        let msgs = tape.mul_col(ze, coeff)?;
        let h = tape.spmm(self.node_sum.clone(), msgs)?;
        let y = affine(tape, h, theta, Some(bias))?;
        let y = act.apply(tape, y);
        tape.scale_rows(y, &self.mask)
    }
}

/// HCHA layer with ELU outside and uniform attention when `edge_attn` is
/// absent.
pub fn hcha_layer(
    tape: &mut Tape,
    hg: &Hypergraph,
    x: Var,
    edge_attn: Option<(Var, Var)>,
    theta: Var,
    bias: Var,
) -> Result<Var> {
    HchaLayer::new(hg).forward(tape, x, edge_attn, theta, bias, Activation::Elu)
}

/// Which quantity normalizes the hyperedge-to-node sum of HNHN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HnhnNormalizer {
    /// `Σ_{e∋v} d_v^α`, i.e. `d_v^{1+α}`.
    #[default]
    NodeDegree,
    /// `Σ_{e∋v} |e|^α`.
    EdgeCardinality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HnhnParams {
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub normalizer: HnhnNormalizer,
}

impl Default for HnhnParams {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            normalizer: HnhnNormalizer::NodeDegree,
        }
    }
}

/// Per-member weights of the HNHN node-to-hyperedge sum, `d_u^β / Σ_{u'∈e} d_{u'}^β`.
pub(crate) fn hnhn_v2e_weights(hg: &Hypergraph, beta: f64) -> Result<Vec<Vec<f64>>> {
    (0..hg.num_edges())
        .map(|e| {
            let raw: Vec<f64> = hg.edge(e).iter().map(|&u| (hg.degree(u) as f64).powf(beta)).collect();
            let norm: f64 = raw.iter().sum();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::ZeroNormalizer { what: "hyperedge", index: e });
            }
            Ok(raw.into_iter().map(|r| r / norm).collect())
        })
        .collect()
}

/// Per-incident-edge weights of the HNHN hyperedge-to-node sum,
/// `|e|^α / d_{v,l,α}`; empty for isolated nodes.
pub(crate) fn hnhn_e2v_weights(hg: &Hypergraph, p: HnhnParams) -> Result<Vec<Vec<f64>>> {
    (0..hg.num_nodes())
        .map(|v| {
            let edges = hg.node_edges(v);
            if edges.is_empty() {
                return Ok(Vec::new());
            }
            let raw: Vec<f64> = edges.iter().map(|&e| (hg.edge(e).len() as f64).powf(p.alpha)).collect();
            let norm = match p.normalizer {
                HnhnNormalizer::NodeDegree => {
                    let dv = hg.degree(v) as f64;
                    edges.len() as f64 * dv.powf(p.alpha)
                }
                HnhnNormalizer::EdgeCardinality => raw.iter().sum(),
            };
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::ZeroNormalizer { what: "node", index: v });
            }
            Ok(raw.into_iter().map(|r| r / norm).collect())
        })
        .collect()
}

/// Two-stage HNHN layer returning `(X', Z')`.
#[derive(Debug, Clone)]
pub struct HnhnLayer {
    v2e: Arc<CsrMatrix>,
    e2v: Arc<CsrMatrix>,
    mask: Vec<f64>,
}

impl HnhnLayer {
    pub fn new(hg: &Hypergraph, p: HnhnParams) -> Result<Self> {
        let v2e_w = hnhn_v2e_weights(hg, p.beta)?;
        let e2v_w = hnhn_e2v_weights(hg, p)?;
        let v2e = CsrMatrix::from_rows(
            hg.num_nodes(),
            (0..hg.num_edges()).map(|e| hg.edge(e).iter().copied().zip(v2e_w[e].clone()).collect::<Vec<_>>()),
        );
        let e2v = CsrMatrix::from_rows(
            hg.num_edges(),
            (0..hg.num_nodes()).map(|v| hg.node_edges(v).iter().copied().zip(e2v_w[v].clone()).collect::<Vec<_>>()),
        );
        Ok(Self {
            v2e: Arc::new(v2e),
            e2v: Arc::new(e2v),
            mask: degree_mask(hg),
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: Var,
        theta_e: Var,
        bias_e: Var,
        theta_v: Var,
        bias_v: Var,
        act: Activation,
    ) -> Result<(Var, Var)> {
        check_rows(tape, "hnhn_layer", x, self.mask.len())?;
        let he = tape.spmm(self.v2e.clone(), x)?;
        let z = affine(tape, he, theta_e, Some(bias_e))?;
        let z = act.apply(tape, z);
        let hv = tape.spmm(self.e2v.clone(), z)?;
        let y = affine(tape, hv, theta_v, Some(bias_v))?;
        let y = act.apply(tape, y);
        let y = tape.scale_rows(y, &self.mask)?;
        Ok((y, z))
    }
}

/// HNHN layer with ReLU.
#[allow(clippy::too_many_arguments)]
pub fn hnhn_layer(
    tape: &mut Tape,
    hg: &Hypergraph,
    x: Var,
    theta_e: Var,
    bias_e: Var,
    theta_v: Var,
    bias_v: Var,
    p: HnhnParams,
) -> Result<(Var, Var)> {
    HnhnLayer::new(hg, p)?.forward(tape, x, theta_e, bias_e, theta_v, bias_v, Activation::Relu)
}

/// Mediator pair of each hyperedge: the lexicographically first `(i, j)`,
/// `i < j`, maximizing `‖h_i − h_j‖`.
pub fn mediator_pairs(hg: &Hypergraph, h: &DenseMatrix) -> Result<Vec<(usize, usize)>> {
    hg.edges()
        .iter()
        .enumerate()
        .map(|(e, members)| {
            if members.len() < 2 {
                return Err(Error::DegenerateEdge { edge: e, size: members.len() });
            }
            let mut best = (members[0], members[1]);
            let mut best_d = f64::NEG_INFINITY;
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    let d: f64 = h.row(i).iter().zip(h.row(j)).map(|(p, q)| (p - q) * (p - q)).sum();
                    if d > best_d {
                        best_d = d;
                        best = (i, j);
                    }
                }
            }
            Ok(best)
        })
        .collect()
}

/// `w_{uv,e}` for every `(v, e, u)` with `u, v ∈ e`: `1/(2|e|−3)` when `u` or
/// `v` is a mediator endpoint, else 0.
pub fn mediator_operator(hg: &Hypergraph, pairs: &[(usize, usize)]) -> CsrMatrix {
    let rows = (0..hg.num_nodes()).map(|v| {
        let mut row = Vec::new();
        for &e in hg.node_edges(v) {
            let members = hg.edge(e);
            let (i, j) = pairs[e];
            let w = 1.0 / (2.0 * members.len() as f64 - 3.0);
            let v_end = v == i || v == j;
            for &u in members {
                if v_end || u == i || u == j {
                    row.push((u, w));
                }
            }
        }
        row
    });
    CsrMatrix::from_rows(hg.num_nodes(), rows)
}

/// `X'_v = σ([Σ_{e∋v} Σ_{u∈e} w_{uv,e} X_u] Θ + b)` with mediator weights
/// recomputed from the current `XΘ`. The pair selection is treated as
/// constant under differentiation.
pub fn hypergcn_layer(
    tape: &mut Tape,
    hg: &Hypergraph,
    x: Var,
    theta: Var,
    bias: Var,
    act: Activation,
) -> Result<Var> {
    check_rows(tape, "hypergcn_layer", x, hg.num_nodes())?;
    let h = tape.matmul(x, theta)?;
    let pairs = mediator_pairs(hg, tape.value(h))?;
    let op = Arc::new(mediator_operator(hg, &pairs));
    let agg = tape.spmm(op, h)?;
    let y = tape.add_row(agg, bias)?;
    Ok(act.apply(tape, y))
}

/// What to do with an all-zero row before unit normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroRowPolicy {
    #[default]
    Error,
    /// Leave the row at zero.
    Keep,
}

/// Divides every row by its Euclidean norm.
pub fn unit_normalize_rows(tape: &mut Tape, x: Var, policy: ZeroRowPolicy) -> Result<Var> {
    let sq = tape.mul(x, x)?;
    let sq = tape.row_sum(sq);
    let zero: Vec<usize> = (0..tape.shape(sq).0).filter(|&r| tape.value(sq).get(r, 0) == 0.0).collect();
    let sq = match (zero.first(), policy) {
        (None, _) => sq,
        (Some(&row), ZeroRowPolicy::Error) => return Err(Error::ZeroNormRow { row }),
        (Some(_), ZeroRowPolicy::Keep) => {
            let mut fill = DenseMatrix::zeros(tape.shape(sq).0, 1);
            for &r in &zero {
                fill.set(r, 0, 1.0);
            }
            let fill = tape.constant(fill);
            tape.add(sq, fill)?
        }
    };
    let inv = tape.powf(sq, -0.5);
    tape.mul_col(x, inv)
}

/// `(mean of rows^p)^{1/p}` for each group of a row-averaging operator.
pub(crate) fn power_mean(tape: &mut Tape, mean_op: Arc<CsrMatrix>, x: Var, p: f64) -> Result<Var> {
    if p == 1.0 {
        return tape.spmm(mean_op, x);
    }
    let xp = tape.powf(x, p);
    let m = tape.spmm(mean_op, xp)?;
    Ok(tape.powf(m, 1.0 / p))
}

pub(crate) fn check_power(tape: &Tape, x: Var, p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidConfig(format!("power-mean exponent must be >= 1, got {p}")));
    }
    if p != 1.0 {
        let xv = tape.value(x);
        for r in 0..xv.rows() {
            if let Some((c, &value)) = xv.row(r).iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::NegativeBase { row: r, col: c, value });
            }
        }
    }
    Ok(())
}

/// Power-mean aggregation both ways, a residual add, row normalization and a
/// bias-free linear map:
/// `Z_e = PM_p(X_u : u∈e)`, `X*_v = PM_p(Z_e : e∋v) + X_v`,
/// `X'_v = σ((X*_v/‖X*_v‖) Θ)`.
#[derive(Debug, Clone)]
pub struct HyperSageLayer {
    edge_mean: Arc<CsrMatrix>,
    node_mean: Arc<CsrMatrix>,
    pub p: f64,
    pub zero_rows: ZeroRowPolicy,
}

impl HyperSageLayer {
    pub fn new(hg: &Hypergraph, p: f64) -> Self {
        let edge_mean = CsrMatrix::from_rows(
            hg.num_nodes(),
            hg.edges().iter().map(|m| {
                let w = 1.0 / m.len() as f64;
                m.iter().map(move |&u| (u, w))
            }),
        );
        let node_mean = CsrMatrix::from_rows(
            hg.num_edges(),
            (0..hg.num_nodes()).map(|v| {
                let es = hg.node_edges(v);
                let w = 1.0 / es.len().max(1) as f64;
                es.iter().map(move |&e| (e, w))
            }),
        );
        Self {
            edge_mean: Arc::new(edge_mean),
            node_mean: Arc::new(node_mean),
            p,
            zero_rows: ZeroRowPolicy::Error,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, theta: Var, act: Activation) -> Result<Var> {
        check_rows(tape, "hypersage_layer", x, self.node_mean.rows())?;
        check_power(tape, x, self.p)?;
        let z = power_mean(tape, self.edge_mean.clone(), x, self.p)?;
        let pooled = power_mean(tape, self.node_mean.clone(), z, self.p)?;
        let star = tape.add(pooled, x)?;
        let unit = unit_normalize_rows(tape, star, self.zero_rows)?;
        let y = tape.matmul(unit, theta)?;
        Ok(act.apply(tape, y))
    }
}

/// HyperSAGE layer with ReLU that rejects all-zero rows.
pub fn hypersage_layer(tape: &mut Tape, hg: &Hypergraph, x: Var, theta: Var, p: f64) -> Result<Var> {
    HyperSageLayer::new(hg, p).forward(tape, x, theta, Activation::Relu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, ParamSet, DEFAULT_STEP};
    use crate::rng::Rng;

    fn random(rng: &mut Rng, r: usize, c: usize, lo: f64, hi: f64) -> DenseMatrix {
        DenseMatrix::new(r, c, (0..r * c).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
    }

    fn eval(x: &DenseMatrix, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<DenseMatrix> {
        let mut t = Tape::new();
        let xv = t.constant(x.clone());
        let y = f(&mut t, xv)?;
        Ok(t.value(y).clone())
    }

    fn toy() -> Hypergraph {
        Hypergraph::from_edge_list(6, &[vec![0, 1, 2], vec![1, 3], vec![2, 3, 4, 0]], Some(vec![1.0, 2.0, 0.5])).unwrap()
    }

    #[test]
    fn hgnn_single_edge_by_hand() {
        let hg = Hypergraph::from_edge_list(2, &[vec![0, 1]], None).unwrap();
        let y = eval(&DenseMatrix::filled(2, 1, 1.0), |t, x| {
            let th = t.constant(DenseMatrix::identity(1));
            let b = t.constant(DenseMatrix::zeros(1, 1));
            hgnn_layer(t, &hg, x, th, b)
        })
        .unwrap();
        assert_eq!(y.data(), &[1.0, 1.0]);
        let zero = eval(&DenseMatrix::zeros(2, 1), |t, x| {
            let th = t.constant(DenseMatrix::identity(1));
            let b = t.constant(DenseMatrix::zeros(1, 1));
            hgnn_layer(t, &hg, x, th, b)
        })
        .unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn hgnn_operator_is_the_normalized_product() {
        // D^{-1/2} H W B^{-1} Hᵀ D^{-1/2} assembled with dense matrices
        let hg = toy();
        let (n, m) = (hg.num_nodes(), hg.num_edges());
        let mut h = DenseMatrix::zeros(n, m);
        for (e, members) in hg.edges().iter().enumerate() {
            for &v in members {
                h.set(v, e, 1.0);
            }
        }
        let mut wb = DenseMatrix::zeros(m, m);
        for e in 0..m {
            wb.set(e, e, hg.weight(e) / hg.edge(e).len() as f64);
        }
        let mut dv = DenseMatrix::zeros(n, n);
        for v in 0..n {
            let d = hg.degree(v) as f64;
            dv.set(v, v, if d > 0.0 { d.powf(-0.5) } else { 0.0 });
        }
        let expected = dv
            .matmul(&h)
            .unwrap()
            .matmul(&wb)
            .unwrap()
            .matmul(&h.transpose())
            .unwrap()
            .matmul(&dv)
            .unwrap();
        assert!(HgnnLayer::new(&hg).operator().to_dense().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn hcha_uniform_attention_rows_sum_to_one() {
        let hg = toy();
        let layer = HchaLayer::new(&hg);
        let mut rng = Rng::new(11);
        let mut t = Tape::new();
        let x = t.constant(random(&mut rng, 6, 3, -1.0, 1.0));
        let z = t.constant(random(&mut rng, 3, 2, -1.0, 1.0));
        let a = t.constant(random(&mut rng, 5, 1, -1.0, 1.0));
        for attn in [None, Some((z, a))] {
            let alpha = layer.attention(&mut t, x, attn).unwrap();
            let vals = t.value(alpha);
            for w in layer.node_offsets.windows(2) {
                if w[0] < w[1] {
                    let s: f64 = (w[0]..w[1]).map(|r| vals.get(r, 0)).sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
        // identical node features with zero edge features give equal weights per node
        let same = t.constant(DenseMatrix::filled(6, 3, 0.4));
        let zz = t.constant(DenseMatrix::zeros(3, 2));
        let alpha = layer.attention(&mut t, same, Some((zz, a))).unwrap();
        let uniform = layer.attention(&mut t, same, None).unwrap();
        assert!(t.value(alpha).max_abs_diff(t.value(uniform)) < 1e-15);
    }

    #[test]
    fn hnhn_plain_means_with_zero_exponents() {
        let hg = Hypergraph::from_edge_list(2, &[vec![0, 1]], None).unwrap();
        let x = DenseMatrix::from_rows(&[[1.0, 4.0], [3.0, -2.0]]).unwrap();
        let layer = HnhnLayer::new(&hg, HnhnParams::default()).unwrap();
        let mut t = Tape::new();
        let xv = t.constant(x);
        let i = t.constant(DenseMatrix::identity(2));
        let b = t.constant(DenseMatrix::zeros(1, 2));
        let (y, z) = layer.forward(&mut t, xv, i, b, i, b, Activation::Identity).unwrap();
        assert_eq!(t.value(z).data(), &[2.0, 1.0]);
        assert_eq!(t.value(y).data(), &[2.0, 1.0, 2.0, 1.0]);
    }

    #[test]
    fn hypergcn_weights_and_ties() {
        let pair = Hypergraph::from_edge_list(2, &[vec![0, 1]], None).unwrap();
        let ops = mediator_operator(&pair, &[(0, 1)]).to_dense();
        assert_eq!(ops.data(), &[1.0, 1.0, 1.0, 1.0]);

        let hg = Hypergraph::from_edge_list(4, &[vec![0, 1, 2, 3]], None).unwrap();
        let flat = DenseMatrix::filled(4, 2, 0.3);
        assert_eq!(mediator_pairs(&hg, &flat).unwrap(), vec![(0, 1)]);

        let x = DenseMatrix::column(&[0.0, 5.0, 1.0, 2.0]).unwrap();
        let pairs = mediator_pairs(&hg, &x).unwrap();
        assert_eq!(pairs, vec![(0, 1)]);
        let op = mediator_operator(&hg, &pairs).to_dense();
        let w = 1.0 / 5.0;
        // nodes 2 and 3 only connect through the mediator endpoints
        assert_eq!(op.get(2, 3), 0.0);
        assert_eq!(op.get(3, 2), 0.0);
        assert_eq!(op.get(2, 2), 0.0);
        assert_eq!(op.get(2, 0), w);
        assert_eq!(op.get(0, 3), w);
        assert_eq!(op.get(1, 1), w);

        let single = Hypergraph::from_edge_list(2, &[vec![1]], None).unwrap();
        assert_eq!(mediator_pairs(&single, &flat).unwrap_err().kind(), "DegenerateEdge");
    }

    #[test]
    fn hypersage_singleton_by_hand() {
        let hg = Hypergraph::from_edge_list(1, &[vec![0]], None).unwrap();
        let x = DenseMatrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let y = eval(&x, |t, xv| {
            let th = t.constant(DenseMatrix::identity(2));
            HyperSageLayer::new(&hg, 1.0).forward(t, xv, th, Activation::Identity)
        })
        .unwrap();
        assert!((y.get(0, 0) - 0.6).abs() < 1e-15 && (y.get(0, 1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn hypersage_power_mean_is_idempotent_on_constants() {
        let hg = toy();
        for p in [1.0, 2.0, 3.5] {
            let layer = HyperSageLayer::new(&hg, p);
            let mut t = Tape::new();
            let x = t.constant(DenseMatrix::filled(6, 2, 0.7));
            let z = power_mean(&mut t, layer.edge_mean.clone(), x, p).unwrap();
            assert!(t.value(z).data().iter().all(|v| (v - 0.7).abs() < 1e-14));
        }
    }

    #[test]
    fn hypersage_guards() {
        let hg = toy();
        let mut t = Tape::new();
        let neg = t.constant(DenseMatrix::filled(6, 2, -1.0));
        let th = t.constant(DenseMatrix::identity(2));
        let e = HyperSageLayer::new(&hg, 2.0).forward(&mut t, neg, th, Activation::Relu).unwrap_err();
        assert_eq!(e.kind(), "NegativeBase");
        let zero = t.constant(DenseMatrix::zeros(6, 2));
        let e = HyperSageLayer::new(&hg, 1.0).forward(&mut t, zero, th, Activation::Relu).unwrap_err();
        assert_eq!(e.kind(), "ZeroNormRow");
        let mut keep = HyperSageLayer::new(&hg, 1.0);
        keep.zero_rows = ZeroRowPolicy::Keep;
        let y = keep.forward(&mut t, zero, th, Activation::Relu).unwrap();
        assert_eq!(t.value(y).max_abs(), 0.0);
    }

    #[test]
    fn layer_gradients() {
        let hg = toy();
        let mut rng = Rng::new(21);
        let mut ps = ParamSet::new();
        let x = ps.add("x", random(&mut rng, 6, 3, 0.1, 1.0));
        let z = ps.add("z", random(&mut rng, 3, 2, -1.0, 1.0));
        let a = ps.add("a", random(&mut rng, 5, 1, -1.0, 1.0));
        let th = ps.add("theta", random(&mut rng, 3, 3, -1.0, 1.0));
        let th2 = ps.add("theta2", random(&mut rng, 3, 3, -1.0, 1.0));
        let b = ps.add("b", random(&mut rng, 1, 3, 0.5, 1.0));
        let w = random(&mut rng, 6, 3, -1.0, 1.0);
        let hcha = HchaLayer::new(&hg);
        let hnhn = HnhnLayer::new(&hg, HnhnParams { alpha: 0.5, beta: -0.5, normalizer: HnhnNormalizer::NodeDegree }).unwrap();
        let sage = HyperSageLayer::new(&hg, 2.0);
        let project = |t: &mut Tape, y: Var| -> Result<Var> {
            let wv = t.constant(w.clone());
            let m = t.mul(y, wv)?;
            Ok(t.sum_all(m))
        };
        let cases: Vec<Box<dyn Fn(&mut Tape, &crate::autodiff::Bound) -> Result<Var>>> = vec![
            Box::new(|t, p| {
                let y = HgnnLayer::new(&hg).forward(t, p[x], p[th], p[b], Activation::Elu)?;
                project(t, y)
            }),
            Box::new(|t, p| {
                let y = hcha.forward(t, p[x], Some((p[z], p[a])), p[th], p[b], Activation::Elu)?;
                project(t, y)
            }),
            Box::new(|t, p| {
                let (y, _) = hnhn.forward(t, p[x], p[th], p[b], p[th2], p[b], Activation::Elu)?;
                project(t, y)
            }),
            Box::new(|t, p| {
                let y = hypergcn_layer(t, &hg, p[x], p[th], p[b], Activation::Elu)?;
                project(t, y)
            }),
            Box::new(|t, p| {
                let y = sage.forward(t, p[x], p[th], Activation::Elu)?;
                project(t, y)
            }),
        ];
        for (i, case) in cases.iter().enumerate() {
            let report = grad_check(&ps, case, DEFAULT_STEP).unwrap();
            assert!(report.max_rel_err < 1e-4, "case {i}: {report:?}");
        }
    }
}
