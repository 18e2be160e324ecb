//! Permutation-invariant functions of a multiset of rows, optionally
//! combined with a second argument (the previous state of the target).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Bound, LayerNorm, Linear, Mlp, MlpSpec, ParamId, ParamSet, Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::propagation::{check_power, power_mean, unit_normalize_rows, HnhnNormalizer, ZeroRowPolicy};
use crate::rng::Rng;
use crate::sparse::CsrMatrix;

use super::grouping::{Direction, Grouping, Structure};

/// Fixed per-entry weights of a weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WeightRule {
    /// `d_u^{-1/2}` for member node `u`.
    HgnnNodeToEdge,
    /// `w_e / (|e| √d_v)` for incident hyperedge `e` of node `v`.
    HgnnEdgeToNode,
    /// `d_u^β / Σ_{u'∈e} d_{u'}^β`.
    HnhnNodeToEdge { beta: f64 },
    /// `|e|^α` over the node normalizer.
    HnhnEdgeToNode { alpha: f64, normalizer: HnhnNormalizer },
}

impl WeightRule {
    fn direction(self) -> Direction {
        match self {
            WeightRule::HgnnNodeToEdge | WeightRule::HnhnNodeToEdge { .. } => Direction::NodeToEdge,
            WeightRule::HgnnEdgeToNode | WeightRule::HnhnEdgeToNode { .. } => Direction::EdgeToNode,
        }
    }

    fn weights(self, g: &Grouping) -> Result<Vec<f64>> {
        let s: &Structure = g
            .structure
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("weighted sums need a hypergraph grouping".into()))?;
        if g.direction != self.direction() {
            return Err(Error::InvalidConfig(format!("{self:?} applied to a {:?} grouping", g.direction)));
        }
        let deg = |k: usize| s.node_degree[g.entry_node[k]] as f64;
        let size = |k: usize| s.edge_size[g.entry_edge[k]] as f64;
        let mut w: Vec<f64> = match self {
            WeightRule::HgnnNodeToEdge => (0..g.num_entries()).map(|k| deg(k).powf(-0.5)).collect(),
            WeightRule::HgnnEdgeToNode => (0..g.num_entries())
                .map(|k| s.edge_weight[g.entry_edge[k]] / (size(k) * deg(k).sqrt()))
                .collect(),
            WeightRule::HnhnNodeToEdge { beta } => (0..g.num_entries()).map(|k| deg(k).powf(beta)).collect(),
            WeightRule::HnhnEdgeToNode { alpha, .. } => (0..g.num_entries()).map(|k| size(k).powf(alpha)).collect(),
        };
        for grp in 0..g.num_groups() {
            let range = g.offsets[grp]..g.offsets[grp + 1];
            if range.is_empty() {
                continue;
            }
            let norm = match self {
                WeightRule::HnhnNodeToEdge { .. }
                | WeightRule::HnhnEdgeToNode { normalizer: HnhnNormalizer::EdgeCardinality, .. } => {
                    w[range.clone()].iter().sum()
                }
                WeightRule::HnhnEdgeToNode { alpha, normalizer: HnhnNormalizer::NodeDegree } => {
                    let dv = deg(range.start);
                    dv * dv.powf(alpha)
                }
                _ => continue,
            };
            if !(norm > 0.0 && f64::is_finite(norm)) {
                let what = if g.direction == Direction::NodeToEdge { "hyperedge" } else { "node" };
                return Err(Error::ZeroNormalizer { what, index: grp });
            }
            w[range].iter_mut().for_each(|v| *v /= norm);
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetTransformerSpec {
    pub heads: usize,
    pub head_dim: usize,
    /// Hidden widths of the per-head key and value MLPs; empty means a single
    /// bias-free linear map.
    #[serde(default)]
    pub key_hidden: Vec<usize>,
    #[serde(default)]
    pub value_hidden: Vec<usize>,
    /// Number of linear layers in the feed-forward block, all of width
    /// `heads · head_dim`.
    #[serde(default = "two")]
    pub ff_layers: usize,
}

fn two() -> usize {
    2
}

impl SetTransformerSpec {
    pub fn new(heads: usize, head_dim: usize) -> Self {
        Self {
            heads,
            head_dim,
            key_hidden: Vec::new(),
            value_hidden: Vec::new(),
            ff_layers: 2,
        }
    }

    pub fn width(&self) -> usize {
        self.heads * self.head_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregatorSpec {
    Sum,
    Mean,
    /// Columnwise product.
    Product,
    /// Columnwise product times `|e| − 1` of the group's hyperedge.
    ScaledProduct,
    PowerMean { p: f64 },
    Weighted(WeightRule),
    /// `outer(Σ inner(x))`.
    DeepSets { inner: MlpSpec, outer: MlpSpec },
    SetTransformer(SetTransformerSpec),
    /// `update(s ∥ Σ message(x ∥ s))` where `s` is the target's previous state.
    Message { message: MlpSpec, update: MlpSpec },
}

/// How the previous state of the target enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SecondArg {
    #[default]
    Ignore,
    Add,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PostSpec {
    #[default]
    Identity,
    /// `σ(h W + b)`.
    Affine {
        out: usize,
        #[serde(default)]
        activation: Activation,
        #[serde(default = "yes")]
        bias: bool,
    },
    /// `σ((h / ‖h‖) W)`.
    UnitNormAffine {
        out: usize,
        #[serde(default)]
        activation: Activation,
        #[serde(default)]
        zero_rows: ZeroRowPolicy,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultisetFunctionSpec {
    pub aggregator: AggregatorSpec,
    #[serde(default)]
    pub second: SecondArg,
    #[serde(default)]
    pub post: PostSpec,
}

impl MultisetFunctionSpec {
    pub fn new(aggregator: AggregatorSpec) -> Self {
        Self {
            aggregator,
            second: SecondArg::Ignore,
            post: PostSpec::Identity,
        }
    }

    pub fn with_second(mut self, second: SecondArg) -> Self {
        self.second = second;
        self
    }

    pub fn with_post(mut self, post: PostSpec) -> Self {
        self.post = post;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SetAttention {
    heads: usize,
    head_dim: usize,
    keys: Vec<Mlp>,
    values: Vec<Mlp>,
    seed: ParamId,
    norm1: LayerNorm,
    ff: Mlp,
    norm2: LayerNorm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Aggregator {
    Sum,
    Mean,
    Product,
    ScaledProduct,
    PowerMean(f64),
    Weighted(WeightRule),
    DeepSets { inner: Mlp, outer: Mlp },
    SetTransformer(SetAttention),
    Message { message: Mlp, update: Mlp },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Post {
    Identity,
    Affine { linear: Linear, activation: Activation },
    UnitNormAffine { linear: Linear, activation: Activation, zero_rows: ZeroRowPolicy },
}

/// A multiset function with its parameters registered in a [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultisetFunction {
    aggregator: Aggregator,
    second: SecondArg,
    post: Post,
    in_width: usize,
    second_width: Option<usize>,
    out_width: usize,
}

impl MultisetFunction {
    /// `second_width` is the width of the previous state, required when it
    /// is used.
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        spec: &MultisetFunctionSpec,
        in_width: usize,
        second_width: Option<usize>,
        rng: &mut Rng,
    ) -> Result<Self> {
        if in_width == 0 {
            return Err(Error::InvalidConfig("multiset input width must be positive".into()));
        }
        let need_second = |what: &str| {
            second_width.ok_or_else(|| Error::InvalidConfig(format!("{what} needs the width of the previous state")))
        };
        let (aggregator, agg_width) = match &spec.aggregator {
            AggregatorSpec::Sum => (Aggregator::Sum, in_width),
            AggregatorSpec::Mean => (Aggregator::Mean, in_width),
            AggregatorSpec::Product => (Aggregator::Product, in_width),
            AggregatorSpec::ScaledProduct => (Aggregator::ScaledProduct, in_width),
            &AggregatorSpec::PowerMean { p } => {
                if !(p >= 1.0 && p.is_finite()) {
                    return Err(Error::InvalidConfig(format!("power-mean exponent must be >= 1, got {p}")));
                }
                (Aggregator::PowerMean(p), in_width)
            }
            &AggregatorSpec::Weighted(rule) => (Aggregator::Weighted(rule), in_width),
            AggregatorSpec::DeepSets { inner, outer } => {
                expect_width("deep-sets inner MLP", inner, in_width)?;
                expect_width("deep-sets outer MLP", outer, inner.output_width())?;
                let inner = Mlp::new(params, &format!("{name}.inner"), inner, rng)?;
                let outer = Mlp::new(params, &format!("{name}.outer"), outer, rng)?;
                let w = outer.output_width();
                (Aggregator::DeepSets { inner, outer }, w)
            }
            AggregatorSpec::SetTransformer(st) => {
                let att = SetAttention::new(params, name, st, in_width, rng)?;
                (Aggregator::SetTransformer(att), st.width())
            }
            AggregatorSpec::Message { message, update } => {
                let s = need_second("a message aggregator")?;
                if spec.second != SecondArg::Ignore {
                    return Err(Error::InvalidConfig(
                        "a message aggregator already consumes the previous state".into(),
                    ));
                }
                expect_width("message MLP", message, in_width + s)?;
                expect_width("update MLP", update, s + message.output_width())?;
                let message = Mlp::new(params, &format!("{name}.message"), message, rng)?;
                let update = Mlp::new(params, &format!("{name}.update"), update, rng)?;
                let w = update.output_width();
                (Aggregator::Message { message, update }, w)
            }
        };
        let combined = match spec.second {
            SecondArg::Ignore => agg_width,
            SecondArg::Add => {
                let s = need_second("adding the previous state")?;
                if s != agg_width {
                    return Err(Error::InvalidConfig(format!(
                        "cannot add a width-{s} state to a width-{agg_width} aggregate"
                    )));
                }
                agg_width
            }
            SecondArg::Concat => agg_width + need_second("concatenating the previous state")?,
        };
        let (post, out_width) = match spec.post {
            PostSpec::Identity => (Post::Identity, combined),
            PostSpec::Affine { out, activation, bias } => {
                let linear = Linear::new(params, &format!("{name}.post"), combined, out, bias, rng);
                (Post::Affine { linear, activation }, out)
            }
            PostSpec::UnitNormAffine { out, activation, zero_rows } => {
                let linear = Linear::new(params, &format!("{name}.post"), combined, out, false, rng);
                (Post::UnitNormAffine { linear, activation, zero_rows }, out)
            }
        };
        if out_width == 0 {
            return Err(Error::InvalidConfig("multiset output width must be positive".into()));
        }
        Ok(Self {
            aggregator,
            second: spec.second,
            post,
            in_width,
            second_width,
            out_width,
        })
    }

    pub fn in_width(&self) -> usize {
        self.in_width
    }

    pub fn out_width(&self) -> usize {
        self.out_width
    }

    /// Whether the previous state of the target is read.
    pub fn uses_second(&self) -> bool {
        self.second != SecondArg::Ignore || matches!(self.aggregator, Aggregator::Message { .. })
    }

    /// The affine map applied after aggregation, if any.
    pub fn post_linear(&self) -> Option<&Linear> {
        match &self.post {
            Post::Identity => None,
            Post::Affine { linear, .. } | Post::UnitNormAffine { linear, .. } => Some(linear),
        }
    }

    /// The message and update MLPs of a message aggregator.
    pub fn message_mlps(&self) -> Option<(&Mlp, &Mlp)> {
        match &self.aggregator {
            Aggregator::Message { message, update } => Some((message, update)),
            _ => None,
        }
    }

    /// One output row per group of `g`. Empty groups yield zero rows unless
    /// the previous state is used, in which case only the aggregate is zero.
    pub fn forward(&self, tape: &mut Tape, p: &Bound, g: &Grouping, input: Var, second: Option<Var>) -> Result<Var> {
        let (rows, cols) = tape.shape(input);
        if rows != g.num_sources() || cols != self.in_width {
            return Err(Error::shape(
                "multiset_function",
                format!(
                    "input {:?}, expected {} rows of width {}",
                    (rows, cols),
                    g.num_sources(),
                    self.in_width
                ),
            ));
        }
        let state = if self.uses_second() {
            let s = second.ok_or_else(|| Error::InvalidConfig("the previous state is required".into()))?;
            if Some(tape.shape(s).1) != self.second_width {
                return Err(Error::shape(
                    "multiset_function",
                    format!("previous state {:?}, expected width {:?}", tape.shape(s), self.second_width),
                ));
            }
            Some(tape.gather_rows(s, &g.group_row)?)
        } else {
            None
        };
        let agg = self.aggregate(tape, p, g, input, state)?;
        let agg = match self.aggregator {
            Aggregator::Message { .. } => agg,
            _ => mask_empty(tape, g, agg)?,
        };
        let combined = match (self.second, state) {
            (SecondArg::Add, Some(s)) => tape.add(agg, s)?,
            (SecondArg::Concat, Some(s)) => tape.concat_cols(&[agg, s])?,
            _ => agg,
        };
        let out = match &self.post {
            Post::Identity => combined,
            Post::Affine { linear, activation } => {
                let y = linear.forward(tape, p, combined)?;
                activation.apply(tape, y)
            }
            Post::UnitNormAffine { linear, activation, zero_rows } => {
                let unit = unit_normalize_rows(tape, combined, *zero_rows)?;
                let y = linear.forward(tape, p, unit)?;
                activation.apply(tape, y)
            }
        };
        if self.uses_second() {
            Ok(out)
        } else {
            mask_empty(tape, g, out)
        }
    }

    fn aggregate(&self, tape: &mut Tape, p: &Bound, g: &Grouping, x: Var, state: Option<Var>) -> Result<Var> {
        let sum = |tape: &mut Tape, x: Var, w: Option<&[f64]>| tape.spmm(Arc::new(g.weighted_sum(w)), x);
        match &self.aggregator {
            Aggregator::Sum => sum(tape, x, None),
            Aggregator::Mean => {
                let w = mean_weights(g);
                sum(tape, x, Some(&w))
            }
            Aggregator::Product => {
                let rows = tape.gather_rows(x, &g.sources)?;
                tape.segment_prod(rows, g.offsets.clone())
            }
            Aggregator::ScaledProduct => {
                let edges = g
                    .group_edge
                    .as_ref()
                    .zip(g.structure.as_ref())
                    .ok_or_else(|| Error::InvalidConfig("a scaled product needs hyperedge groups".into()))?;
                let factors: Vec<f64> = edges
                    .0
                    .iter()
                    .map(|&e| edges.1.edge_size[e].saturating_sub(1) as f64)
                    .collect();
                let rows = tape.gather_rows(x, &g.sources)?;
                let prod = tape.segment_prod(rows, g.offsets.clone())?;
                tape.scale_rows(prod, &factors)
            }
            &Aggregator::PowerMean(pw) => {
                check_power(tape, x, pw)?;
                let w = mean_weights(g);
                power_mean(tape, Arc::new(g.weighted_sum(Some(&w))), x, pw)
            }
            Aggregator::Weighted(rule) => {
                let w = rule.weights(g)?;
                sum(tape, x, Some(&w))
            }
            Aggregator::DeepSets { inner, outer } => {
                let h = inner.forward(tape, p, x)?;
                let s = sum(tape, h, None)?;
                outer.forward(tape, p, s)
            }
            Aggregator::SetTransformer(att) => att.forward(tape, p, g, x),
            Aggregator::Message { message, update } => {
                let state = state.expect("checked by forward");
                let own = tape.gather_rows(state, &g.entry_group())?;
                let members = tape.gather_rows(x, &g.sources)?;
                let pairs = tape.concat_cols(&[members, own])?;
                let msgs = message.forward(tape, p, pairs)?;
                let m = tape.spmm(Arc::new(CsrMatrix::segment_sum(&g.offsets)), msgs)?;
                let m = mask_empty(tape, g, m)?;
                let cat = tape.concat_cols(&[state, m])?;
                update.forward(tape, p, cat)
            }
        }
    }

    /// Evaluates on plain matrices.
    pub fn apply(
        &self,
        params: &ParamSet,
        g: &Grouping,
        input: &DenseMatrix,
        second: Option<&DenseMatrix>,
    ) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let p = tape.bind(params);
        let x = tape.constant(input.clone());
        let s = second.map(|s| tape.constant(s.clone()));
        let y = self.forward(&mut tape, &p, g, x, s)?;
        Ok(tape.value(y).clone())
    }
}

fn expect_width(what: &str, spec: &MlpSpec, width: usize) -> Result<()> {
    spec.validate()?;
    if spec.input_width() != width {
        return Err(Error::InvalidConfig(format!(
            "{what} takes width {}, but receives width {width}",
            spec.input_width()
        )));
    }
    Ok(())
}

fn mean_weights(g: &Grouping) -> Vec<f64> {
    let mut w = Vec::with_capacity(g.num_entries());
    for grp in 0..g.num_groups() {
        let n = g.group_len(grp);
        w.extend(std::iter::repeat(1.0 / n as f64).take(n));
    }
    w
}

fn mask_empty(tape: &mut Tape, g: &Grouping, x: Var) -> Result<Var> {
    let mask = g.nonempty_mask();
    if mask.iter().all(|&m| m == 1.0) {
        Ok(x)
    } else {
        tape.scale_rows(x, &mask)
    }
}

impl SetAttention {
    fn new(params: &mut ParamSet, name: &str, spec: &SetTransformerSpec, in_width: usize, rng: &mut Rng) -> Result<Self> {
        if spec.heads == 0 || spec.head_dim == 0 || spec.ff_layers == 0 {
            return Err(Error::InvalidConfig(
                "set attention needs at least one head, one head dimension and one feed-forward layer".into(),
            ));
        }
        let width = spec.width();
        let projection = |hidden: &[usize]| {
            let mut widths = vec![in_width];
            widths.extend_from_slice(hidden);
            widths.push(spec.head_dim);
            MlpSpec::new(widths, Activation::Relu, false)
        };
        let mut keys = Vec::with_capacity(spec.heads);
        let mut values = Vec::with_capacity(spec.heads);
        for h in 0..spec.heads {
            keys.push(Mlp::new(params, &format!("{name}.key{h}"), &projection(&spec.key_hidden), rng)?);
            values.push(Mlp::new(params, &format!("{name}.value{h}"), &projection(&spec.value_hidden), rng)?);
        }
        let seed = params.normal(format!("{name}.seed"), 1, width, (1.0 / width as f64).sqrt(), rng);
        let norm1 = LayerNorm::new(params, &format!("{name}.norm1"), width);
        let ff = MlpSpec::new(vec![width; spec.ff_layers + 1], Activation::Relu, true);
        let ff = Mlp::new(params, &format!("{name}.ff"), &ff, rng)?;
        let norm2 = LayerNorm::new(params, &format!("{name}.norm2"), width);
        Ok(Self {
            heads: spec.heads,
            head_dim: spec.head_dim,
            keys,
            values,
            seed,
            norm1,
            ff,
            norm2,
        })
    }

    /// `Y = LN(θ + MH(θ, S, S))`, output `LN(Y + FF(Y))`, where each head
    /// attends from its slice of the seed `θ` over the keys of the group.
    fn forward(&self, tape: &mut Tape, p: &Bound, g: &Grouping, x: Var) -> Result<Var> {
        let seed = p[self.seed];
        let pool = Arc::new(CsrMatrix::segment_sum(&g.offsets));
        let mut heads = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let k = self.keys[h].forward(tape, p, x)?;
            let k = tape.gather_rows(k, &g.sources)?;
            let q = tape.slice_cols(seed, h * self.head_dim, self.head_dim)?;
            let qt = tape.transpose(q);
            let logits = tape.matmul(k, qt)?;
            let attn = tape.segment_softmax(logits, g.offsets.clone())?;
            let v = self.values[h].forward(tape, p, x)?;
            let v = tape.gather_rows(v, &g.sources)?;
            let weighted = tape.mul_col(v, attn)?;
            heads.push(tape.spmm(pool.clone(), weighted)?);
        }
        let mh = tape.concat_cols(&heads)?;
        let y = tape.add_row(mh, seed)?;
        let y = self.norm1.forward(tape, p, y)?;
        let f = self.ff.forward(tape, p, y)?;
        let r = tape.add(y, f)?;
        self.norm2.forward(tape, p, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, DEFAULT_STEP};
    use crate::hypergraph::Hypergraph;

    fn random(rng: &mut Rng, r: usize, c: usize, lo: f64, hi: f64) -> DenseMatrix {
        DenseMatrix::new(r, c, (0..r * c).map(|_| rng.uniform(lo, hi)).collect()).unwrap()
    }

    fn build(spec: &MultisetFunctionSpec, in_width: usize, second: Option<usize>) -> (ParamSet, MultisetFunction) {
        let mut params = ParamSet::new();
        let f = MultisetFunction::new(&mut params, "f", spec, in_width, second, &mut Rng::new(1)).unwrap();
        (params, f)
    }

    fn lists() -> Grouping {
        Grouping::from_lists(4, &[vec![0, 1], vec![2], vec![], vec![3, 0, 1]]).unwrap()
    }

    #[test]
    fn elementary_aggregators() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let g = lists();
        let run = |agg| {
            let (params, f) = build(&MultisetFunctionSpec::new(agg), 2, None);
            f.apply(&params, &g, &x, None).unwrap()
        };
        let sum = run(AggregatorSpec::Sum);
        assert_eq!(sum.row(0), &[4.0, 6.0]);
        assert_eq!(sum.row(2), &[0.0, 0.0]);
        assert_eq!(sum.row(3), &[11.0, 14.0]);
        let mean = run(AggregatorSpec::Mean);
        assert_eq!(mean.row(0), &[2.0, 3.0]);
        let prod = run(AggregatorSpec::Product);
        assert_eq!(prod.row(3), &[21.0, 64.0]);
        assert_eq!(prod.row(2), &[0.0, 0.0]);
        let pm = run(AggregatorSpec::PowerMean { p: 2.0 });
        assert!((pm.get(0, 0) - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn empty_groups_are_zero_even_with_a_bias() {
        let spec = MultisetFunctionSpec::new(AggregatorSpec::Mean).with_post(PostSpec::Affine {
            out: 3,
            activation: Activation::Identity,
            bias: true,
        });
        let (mut params, f) = build(&spec, 2, None);
        let b = f.post_linear().unwrap().bias.unwrap();
        params.set(b, DenseMatrix::filled(1, 3, 1.0)).unwrap();
        let y = f.apply(&params, &lists(), &DenseMatrix::filled(4, 2, 1.0), None).unwrap();
        assert_eq!(y.row(2), &[0.0; 3]);
        assert!(y.row(0).iter().all(|&v| v != 0.0));
    }

    #[test]
    fn second_argument_modes() {
        let x = DenseMatrix::filled(4, 2, 1.0);
        let s = DenseMatrix::from_rows(&[vec![10.0, 20.0], vec![30.0, 40.0], vec![50.0, 60.0], vec![0.5, 0.5]]).unwrap();
        let add = MultisetFunctionSpec::new(AggregatorSpec::Sum).with_second(SecondArg::Add);
        let (params, f) = build(&add, 2, Some(2));
        let y = f.apply(&params, &lists(), &x, Some(&s)).unwrap();
        assert_eq!(y.row(0), &[12.0, 22.0]);
        assert_eq!(y.row(2), &[50.0, 60.0]);
        let cat = MultisetFunctionSpec::new(AggregatorSpec::Sum).with_second(SecondArg::Concat);
        let (params, f) = build(&cat, 2, Some(2));
        assert_eq!(f.out_width(), 4);
        let y = f.apply(&params, &lists(), &x, Some(&s)).unwrap();
        assert_eq!(y.row(1), &[1.0, 1.0, 30.0, 40.0]);
        assert_eq!(f.apply(&params, &lists(), &x, None).unwrap_err().kind(), "InvalidConfig");
    }

    #[test]
    fn configuration_errors() {
        let mut params = ParamSet::new();
        let mut rng = Rng::new(0);
        let bad = [
            (MultisetFunctionSpec::new(AggregatorSpec::PowerMean { p: 0.5 }), None),
            (MultisetFunctionSpec::new(AggregatorSpec::Sum).with_second(SecondArg::Add), None),
            (MultisetFunctionSpec::new(AggregatorSpec::Sum).with_second(SecondArg::Add), Some(3)),
            (
                MultisetFunctionSpec::new(AggregatorSpec::DeepSets {
                    inner: MlpSpec::new(vec![3, 4], Activation::Relu, true),
                    outer: MlpSpec::new(vec![4, 2], Activation::Relu, true),
                }),
                None,
            ),
            (MultisetFunctionSpec::new(AggregatorSpec::SetTransformer(SetTransformerSpec::new(0, 2))), None),
        ];
        for (spec, second) in bad {
            let e = MultisetFunction::new(&mut params, "f", &spec, 2, second, &mut rng).unwrap_err();
            assert_eq!(e.kind(), "InvalidConfig", "{spec:?}");
        }
        let (params, f) = build(&MultisetFunctionSpec::new(AggregatorSpec::Weighted(WeightRule::HgnnNodeToEdge)), 2, None);
        let e = f.apply(&params, &lists(), &DenseMatrix::zeros(4, 2), None).unwrap_err();
        assert_eq!(e.kind(), "InvalidConfig");
        let (params, f) = build(&MultisetFunctionSpec::new(AggregatorSpec::PowerMean { p: 2.0 }), 2, None);
        let e = f.apply(&params, &lists(), &DenseMatrix::filled(4, 2, -1.0), None).unwrap_err();
        assert_eq!(e.kind(), "NegativeBase");
        let e = f.apply(&params, &lists(), &DenseMatrix::zeros(3, 2), None).unwrap_err();
        assert_eq!(e.kind(), "ShapeMismatch");
    }

    #[test]
    fn weighted_rules_follow_the_formulas() {
        let hg = Hypergraph::from_edge_list(4, &[vec![0, 1, 2], vec![1, 2]], Some(vec![2.0, 1.0])).unwrap();
        let s = Arc::new(Structure::of(&hg));
        let v2e = Grouping::node_to_edge(&hg, s.clone());
        let e2v = Grouping::edge_to_node(&hg, s);
        let w = WeightRule::HgnnNodeToEdge.weights(&v2e).unwrap();
        assert_eq!(w, vec![1.0, 2f64.powf(-0.5), 2f64.powf(-0.5), 2f64.powf(-0.5), 2f64.powf(-0.5)]);
        let w = WeightRule::HgnnEdgeToNode.weights(&e2v).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[2] - 1.0 / (2.0 * 2f64.sqrt())).abs() < 1e-15);
        let w = WeightRule::HnhnNodeToEdge { beta: 1.0 }.weights(&v2e).unwrap();
        assert_eq!(&w[..3], &[0.2, 0.4, 0.4]);
        let rule = WeightRule::HnhnEdgeToNode { alpha: 1.0, normalizer: HnhnNormalizer::EdgeCardinality };
        let w = rule.weights(&e2v).unwrap();
        assert_eq!(&w[1..3], &[0.6, 0.4]);
        let rule = WeightRule::HnhnEdgeToNode { alpha: 1.0, normalizer: HnhnNormalizer::NodeDegree };
        let w = rule.weights(&e2v).unwrap();
        assert_eq!(&w[1..3], &[0.75, 0.5]);
        assert_eq!(WeightRule::HgnnNodeToEdge.weights(&e2v).unwrap_err().kind(), "InvalidConfig");
    }

    #[test]
    fn set_attention_is_invariant_and_differentiable() {
        let spec = MultisetFunctionSpec::new(AggregatorSpec::SetTransformer(SetTransformerSpec::new(2, 3)));
        let (params, f) = build(&spec, 3, None);
        let mut rng = Rng::new(4);
        let x = random(&mut rng, 4, 3, -1.0, 1.0);
        let g = lists();
        let a = f.apply(&params, &g, &x, None).unwrap();
        let b = f.apply(&params, &g.shuffled(&mut rng), &x, None).unwrap();
        assert!(a.max_rel_diff(&b, 1e-12) < 1e-12);
        assert_eq!(a.row(2), &[0.0; 6]);
        let wts = random(&mut rng, 4, 6, -1.0, 1.0);
        let report = grad_check(
            &params,
            |t, p| {
                let xv = t.constant(x.clone());
                let y = f.forward(t, p, &g, xv, None)?;
                let w = t.constant(wts.clone());
                let yw = t.mul(y, w)?;
                Ok(t.sum_all(yw))
            },
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-5, "{report:?}");
    }

    #[test]
    fn spec_serde_shape() {
        let spec = MultisetFunctionSpec::new(AggregatorSpec::Weighted(WeightRule::HnhnNodeToEdge { beta: 0.5 }));
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(
            text,
            r#"{"aggregator":{"kind":"weighted","rule":"hnhn_node_to_edge","beta":0.5},"second":"ignore","post":{"kind":"identity"}}"#
        );
        let back: MultisetFunctionSpec = serde_json::from_str(r#"{"aggregator":{"kind":"sum"}}"#).unwrap();
        assert_eq!(back, MultisetFunctionSpec::new(AggregatorSpec::Sum));
    }
}
