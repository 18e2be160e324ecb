//! Self-contained checks of the toolkit's headline claims, each reported as
//! one pass/fail line.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::allset::theorems::{check_case, random_hypergraph, random_matrix, Case};
use crate::allset::{
    AggregatorSpec, AllSetGraph, AllSetLayer, AllSetLayerSpec, Grouping, MultisetFunction, MultisetFunctionSpec,
    PostSpec, SecondArg, SetTransformerSpec, Variant, WeightRule,
};
use crate::autodiff::{
    grad_check_with, Activation, GradCheckReport, AdamConfig, AdamState, Bound, MlpSpec, ParamSet, Stencil, Tape, Var,
};
use crate::dataset::{convert, load_dataset_dir, DatasetBundle, META_FILE};
use crate::error::{Error, Result};
use crate::hypergraph::{build_adjacency_tensor, Hypergraph};
use crate::matrix::DenseMatrix;
use crate::propagation::{
    hypergcn_layer, z_prop, HchaLayer, HgnnLayer, HnhnLayer, HnhnNormalizer, HnhnParams, HyperSageLayer,
};
use crate::rng::Rng;
use crate::train::{run_experiment, DatasetSource, ExperimentResult, ModelKind, TrainConfig};

pub const THEOREM_INSTANCES: usize = 50;
pub const GRADCHECK_SEEDS: u64 = 3;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
pub const GRADCHECK_STEP: f64 = 1e-4;
pub const PERMUTATION_TRIPLES: usize = 100;
pub const PERMUTATION_TOLERANCE: f64 = 1e-9;
pub const MAX_FIT_STEPS: usize = 2000;
pub const MAX_FIT_MSE: f64 = 1e-2;
pub const ZOO_RUNS: usize = 5;
pub const ZOO_MIN_ACCURACY: f64 = 0.90;
pub const CORA_MIN_ACCURACY: f64 = 0.74;
pub const BASELINE_GAP: f64 = 0.03;

/// Environment variable naming a Cora directory (bundle or raw LINQS files).
pub const CORA_DIR_VAR: &str = "HGX_CORA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Theorems,
    Tensor,
    Gradcheck,
    Permutation,
    DeepsetsFit,
    /// The Zoo reproduction, its MLP baseline and the determinism rerun.
    Zoo,
    Cora,
    All,
}

impl Target {
    pub const ALL: [Target; 8] = [
        Target::Theorems,
        Target::Tensor,
        Target::Gradcheck,
        Target::Permutation,
        Target::DeepsetsFit,
        Target::Zoo,
        Target::Cora,
        Target::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Target::Theorems => "theorems",
            Target::Tensor => "tensor",
            Target::Gradcheck => "gradcheck",
            Target::Permutation => "permutation",
            Target::DeepsetsFit => "deepsets-fit",
            Target::Zoo => "zoo",
            Target::Cora => "cora",
            Target::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == s)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
    pub required: String,
    pub seconds: f64,
    /// The headline number compared against the threshold, when one was
    /// measured.
    pub value: Option<f64>,
}

impl CriterionReport {
    fn new(id: u8, name: &'static str, passed: bool, measured: String, required: String, elapsed: Duration) -> Self {
        Self {
            id,
            name,
            passed,
            measured,
            required,
            seconds: elapsed.as_secs_f64(),
            value: None,
        }
    }

    fn with_value(mut self, v: f64) -> Self {
        self.value = Some(v);
        self
    }

    fn failed(id: u8, name: &'static str, err: &Error, required: String, elapsed: Duration) -> Self {
        Self::new(id, name, false, format!("error: {err}"), required, elapsed)
    }

    /// `PASS [3] gradcheck: measured ... (required ...) in 1.2s`.
    pub fn line(&self) -> String {
        format!(
            "{} [{}] {}: {} (required {}) in {:.1}s",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.required,
            self.seconds
        )
    }
}

#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    /// Directory holding `zoo/` and optionally `cora/`.
    pub data_root: PathBuf,
    /// Overrides `data_root/cora`.
    pub cora_dir: Option<PathBuf>,
    pub seed: u64,
    pub jobs: usize,
}

impl ReproduceOptions {
    pub fn new(data_root: impl Into<PathBuf>) -> Self {
        Self {
            data_root: data_root.into(),
            cora_dir: None,
            seed: 0,
            jobs: 1,
        }
    }

    /// Reads the Cora override from the environment.
    pub fn with_env(mut self) -> Self {
        if let Some(dir) = std::env::var_os(CORA_DIR_VAR) {
            self.cora_dir = Some(dir.into());
        }
        self
    }

    pub fn zoo_dir(&self) -> PathBuf {
        self.data_root.join("zoo")
    }

    pub fn cora_dir(&self) -> PathBuf {
        self.cora_dir.clone().unwrap_or_else(|| self.data_root.join("cora"))
    }
}

pub fn run_target(target: Target, opts: &ReproduceOptions) -> Vec<CriterionReport> {
    match target {
        Target::Theorems => vec![theorem_equivalence(opts.seed)],
        Target::Tensor => vec![tensor_oracle(opts.seed)],
        Target::Gradcheck => vec![layer_gradients(opts.seed)],
        Target::Permutation => vec![permutation_invariance(opts.seed)],
        Target::DeepsetsFit => vec![deepsets_max_fit(opts.seed)],
        Target::Zoo => zoo_suite(opts),
        Target::Cora => vec![cora_reproduction(opts)],
        Target::All => {
            let mut out = vec![
                theorem_equivalence(opts.seed),
                tensor_oracle(opts.seed),
                layer_gradients(opts.seed),
                permutation_invariance(opts.seed),
                deepsets_max_fit(opts.seed),
            ];
            let zoo = zoo_suite(opts);
            out.push(zoo[0].clone());
            out.push(cora_reproduction(opts));
            out.extend(zoo[1..].iter().cloned());
            out
        }
    }
}

fn within(elapsed: Duration, secs: u64) -> bool {
    elapsed < Duration::from_secs(secs)
}

/// Criterion 1: every AllSet construction matches its propagation rule.
pub fn theorem_equivalence(seed: u64) -> CriterionReport {
    let start = Instant::now();
    let required = format!("max deviation < 1e-10 over >= {THEOREM_INSTANCES} instances per case, < 60s");
    let reports: Result<Vec<_>> = Case::ALL
        .iter()
        .enumerate()
        .map(|(i, &case)| check_case(case, seed.wrapping_add(i as u64), THEOREM_INSTANCES))
        .collect();
    let elapsed = start.elapsed();
    match reports {
        Ok(reports) => {
            let worst = reports.iter().map(|r| r.max_deviation).fold(0.0, f64::max);
            let detail: Vec<String> = reports.iter().map(|r| format!("{}={:.1e}", r.case.name(), r.max_deviation)).collect();
            let passed = reports.iter().all(|r| r.passed()) && within(elapsed, 60);
            CriterionReport::new(1, "theorem equivalence", passed, format!("max {worst:.2e} ({})", detail.join(", ")), required, elapsed)
                .with_value(worst)
        }
        Err(e) => CriterionReport::failed(1, "theorem equivalence", &e, required, start.elapsed()),
    }
}

/// Every `d`-uniform hypergraph on `n` nodes without repeated hyperedges, one
/// per subset of the `d`-subsets of `0..n`.
fn uniform_edge_pool(n: usize, d: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, d: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur.push(v);
            rec(v + 1, n, d, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, d, &mut Vec::new(), &mut out);
    out
}

fn tensor_instance(n: usize, d: usize, pool: &[Vec<usize>], mask: u64, seed: u64) -> Result<f64> {
    let edges: Vec<&Vec<usize>> = pool.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| e).collect();
    let hg = Hypergraph::from_edge_list(n, &edges, None)?;
    let stream = ((n * 8 + d) as u64) << 32 | mask;
    let x = random_matrix(&mut Rng::with_stream(seed, stream), n, 2, -1.0, 1.0);
    let direct = z_prop(&hg, &x, d)?;
    let oracle = build_adjacency_tensor(&hg, d)?.contract(&x)?;
    Ok(direct.max_abs_diff(&oracle))
}

/// Criterion 2: exhaustive comparison with the dense adjacency tensor.
pub fn tensor_oracle(seed: u64) -> CriterionReport {
    let start = Instant::now();
    let required = "max |difference| < 1e-10 on every d-uniform hypergraph, n <= 6, d in {2,3,4}, < 60s".to_string();
    let mut instances = 0usize;
    let mut worst = 0.0f64;
    for d in 2..=4 {
        for n in d..=6 {
            let pool = uniform_edge_pool(n, d);
            let count = 1u64 << pool.len();
            let dev = (1..count)
                .into_par_iter()
                .map(|mask| tensor_instance(n, d, &pool, mask, seed))
                .try_reduce(|| 0.0, |a, b| Ok(a.max(b)));
            match dev {
                Ok(dev) => worst = worst.max(dev),
                Err(e) => return CriterionReport::failed(2, "tensor oracle", &e, required, start.elapsed()),
            }
            instances += (count - 1) as usize;
        }
    }
    let elapsed = start.elapsed();
    let passed = worst < 1e-10 && within(elapsed, 60);
    CriterionReport::new(2, "tensor oracle", passed, format!("max {worst:.2e} over {instances} hypergraphs"), required, elapsed)
        .with_value(worst)
}

fn smooth_mlp(widths: Vec<usize>) -> MlpSpec {
    MlpSpec::new(widths, Activation::Elu, true)
}

/// Overwrites every parameter with uniform values in `[lo, hi)`.
fn randomize(params: &mut ParamSet, rng: &mut Rng, lo: f64, hi: f64) {
    for id in params.ids().collect::<Vec<_>>() {
        let (r, c) = params.get(id).shape();
        params.set(id, random_matrix(rng, r, c, lo, hi)).expect("same shape");
    }
}

type Objective<'a> = Box<dyn Fn(&mut Tape, &Bound) -> Result<Var> + 'a>;

/// `Σ Y ⊙ W` for a fixed random `W`.
fn project(tape: &mut Tape, y: Var, w: &DenseMatrix) -> Result<Var> {
    let wv = tape.constant(w.clone());
    let m = tape.mul(y, wv)?;
    Ok(tape.sum_all(m))
}

/// Layer kinds covered by [`gradcheck_layer`].
pub const GRADCHECK_LAYERS: [&str; 7] = ["AllDeepSets", "AllSetTransformer", "HGNN", "HNHN", "HCHA", "HyperGCN", "HyperSAGE"];

/// Gradient check of one layer kind on one random instance.
pub fn gradcheck_layer(kind: &str, seed: u64) -> Result<GradCheckReport> {
    const WIDTH: usize = 3;
    let mut rng = Rng::new(seed);
    // Every multiset has at least two members, so no attention softmax is
    // over a single element (where key gradients vanish identically).
    let hg = loop {
        let hg = random_hypergraph(&mut rng, 7, 4);
        if hg.edges().iter().all(|e| e.len() >= 2) && hg.degrees().iter().all(|&d| d >= 2) {
            break hg;
        }
    };
    let n = hg.num_nodes();
    let mut params = ParamSet::new();
    let w = random_matrix(&mut rng, n, WIDTH, -1.0, 1.0);
    let report = match kind {
        "AllDeepSets" | "AllSetTransformer" => {
            let agg = |input: usize| match kind {
                "AllDeepSets" => AggregatorSpec::DeepSets {
                    inner: smooth_mlp(vec![input, 4, 4]),
                    outer: smooth_mlp(vec![4, 4, WIDTH]),
                },
                _ => AggregatorSpec::SetTransformer(SetTransformerSpec::new(2, 4)),
            };
            let spec = AllSetLayerSpec {
                v2e: MultisetFunctionSpec::new(agg(WIDTH)),
                e2v: MultisetFunctionSpec::new(agg(WIDTH)),
                variant: Variant::Shared,
            };
            let layer = AllSetLayer::new(&mut params, "layer", &spec, WIDTH, None, &mut rng)?;
            let w = random_matrix(&mut rng, n, layer.out_width(), -1.0, 1.0);
            randomize(&mut params, &mut rng, -1.0, 1.0);
            let x = params.add("x", random_matrix(&mut rng, n, WIDTH, -1.0, 1.0));
            let g = AllSetGraph::new(&hg);
            let f: Objective = Box::new(|t, p| {
                let (y, _) = layer.forward(t, p, &g, p[x], None)?;
                project(t, y, &w)
            });
            grad_check_with(&params, f, GRADCHECK_STEP, Stencil::Robust)?
        }
        _ => {
            let x = params.add("x", random_matrix(&mut rng, n, WIDTH, 0.1, 1.0));
            let th = params.add("theta", random_matrix(&mut rng, WIDTH, WIDTH, -1.0, 1.0));
            let th2 = params.add("theta_edge", random_matrix(&mut rng, WIDTH, WIDTH, -1.0, 1.0));
            let b = params.add("bias", random_matrix(&mut rng, 1, WIDTH, -0.5, 0.5));
            let b2 = params.add("bias_edge", random_matrix(&mut rng, 1, WIDTH, -0.5, 0.5));
            let z = params.add("edge_features", random_matrix(&mut rng, hg.num_edges(), 2, -1.0, 1.0));
            let a = params.add("attention", random_matrix(&mut rng, WIDTH + 2, 1, -1.0, 1.0));
            let act = Activation::Elu;
            let f: Objective = match kind {
                "HGNN" => {
                    let l = HgnnLayer::new(&hg);
                    Box::new(move |t, p| {
                        let y = l.forward(t, p[x], p[th], p[b], act)?;
                        project(t, y, &w)
                    })
                }
                "HNHN" => {
                    let l = HnhnLayer::new(&hg, HnhnParams { alpha: 0.5, beta: -0.5, normalizer: HnhnNormalizer::NodeDegree })?;
                    Box::new(move |t, p| {
                        let (y, _) = l.forward(t, p[x], p[th2], p[b2], p[th], p[b], act)?;
                        project(t, y, &w)
                    })
                }
                "HCHA" => {
                    let l = HchaLayer::new(&hg);
                    Box::new(move |t, p| {
                        let y = l.forward(t, p[x], Some((p[z], p[a])), p[th], p[b], act)?;
                        project(t, y, &w)
                    })
                }
                "HyperGCN" => Box::new(|t, p| {
                    let y = hypergcn_layer(t, &hg, p[x], p[th], p[b], act)?;
                    project(t, y, &w)
                }),
                "HyperSAGE" => {
                    let l = HyperSageLayer::new(&hg, 2.0);
                    Box::new(move |t, p| {
                        let y = l.forward(t, p[x], p[th], act)?;
                        project(t, y, &w)
                    })
                }
                other => return Err(Error::InvalidConfig(format!("no gradient check for {other}"))),
            };
            grad_check_with(&params, f, GRADCHECK_STEP, Stencil::Robust)?
        }
    };
    Ok(report)
}

/// Criterion 3: taped gradients agree with central differences.
pub fn layer_gradients(seed: u64) -> CriterionReport {
    let start = Instant::now();
    let required = format!("max rel-err < {GRADCHECK_TOLERANCE:e} on {GRADCHECK_SEEDS} seeds per layer, < 300s");
    let mut detail = Vec::new();
    let mut worst = 0.0f64;
    let mut excess = 0.0f64;
    let (mut entries, mut kinks) = (0, 0);
    for kind in GRADCHECK_LAYERS {
        let mut layer_worst = 0.0f64;
        for s in 0..GRADCHECK_SEEDS {
            match gradcheck_layer(kind, seed.wrapping_add(s)) {
                Ok(r) => {
                    layer_worst = layer_worst.max(r.max_raw_rel_err);
                    excess = excess.max(r.max_rel_err);
                    entries += r.entries_checked;
                    kinks += r.kinks;
                }
                Err(e) => return CriterionReport::failed(3, "gradient checks", &e, required, start.elapsed()),
            }
        }
        worst = worst.max(layer_worst);
        detail.push(format!("{kind}={layer_worst:.1e}"));
    }
    let elapsed = start.elapsed();
    let passed = worst < GRADCHECK_TOLERANCE && within(elapsed, 300);
    let measured = format!(
        "max {worst:.2e} ({}); {entries} entries, {kinks} near a kink, {excess:.1e} beyond rounding noise",
        detail.join(", ")
    );
    CriterionReport::new(3, "gradient checks", passed, measured, required, elapsed).with_value(worst)
}

const PERMUTATION_KINDS: [&str; 13] = [
    "sum",
    "mean",
    "product",
    "power_mean",
    "hgnn_weights",
    "hnhn_weights",
    "deep_sets",
    "set_transformer",
    "HGNN",
    "HNHN",
    "HCHA",
    "HyperGCN",
    "HyperSAGE",
];

fn allset_spec(kind: &str, width: usize) -> Option<AllSetLayerSpec> {
    let affine = PostSpec::Affine {
        out: width,
        activation: Activation::Relu,
        bias: true,
    };
    let pair = |v2e: AggregatorSpec, e2v: AggregatorSpec| AllSetLayerSpec {
        v2e: MultisetFunctionSpec::new(v2e),
        e2v: MultisetFunctionSpec::new(e2v).with_post(affine),
        variant: Variant::Shared,
    };
    let deep = || AggregatorSpec::DeepSets {
        inner: MlpSpec::new(vec![width, 8, 8], Activation::Relu, true),
        outer: MlpSpec::new(vec![8, 8, width], Activation::Relu, true),
    };
    Some(match kind {
        "sum" => pair(AggregatorSpec::Sum, AggregatorSpec::Sum),
        "mean" => pair(AggregatorSpec::Mean, AggregatorSpec::Mean),
        "product" => AllSetLayerSpec {
            v2e: MultisetFunctionSpec::new(AggregatorSpec::Product),
            e2v: MultisetFunctionSpec::new(AggregatorSpec::Sum).with_second(SecondArg::Concat),
            variant: Variant::PerAggregator,
        },
        "power_mean" => pair(AggregatorSpec::PowerMean { p: 3.0 }, AggregatorSpec::PowerMean { p: 2.0 }),
        "hgnn_weights" => pair(
            AggregatorSpec::Weighted(WeightRule::HgnnNodeToEdge),
            AggregatorSpec::Weighted(WeightRule::HgnnEdgeToNode),
        ),
        "hnhn_weights" => pair(
            AggregatorSpec::Weighted(WeightRule::HnhnNodeToEdge { beta: -0.5 }),
            AggregatorSpec::Weighted(WeightRule::HnhnEdgeToNode {
                alpha: 0.5,
                normalizer: HnhnNormalizer::EdgeCardinality,
            }),
        ),
        "deep_sets" => pair(deep(), deep()),
        "set_transformer" => AllSetLayerSpec {
            v2e: MultisetFunctionSpec::new(AggregatorSpec::SetTransformer(SetTransformerSpec::new(2, 2))),
            e2v: MultisetFunctionSpec::new(AggregatorSpec::SetTransformer(SetTransformerSpec::new(2, 2))),
            variant: Variant::Shared,
        },
        _ => return None,
    })
}

/// Raw edge list with hyperedges and their members in random order.
fn scrambled_edges(hg: &Hypergraph, rng: &mut Rng) -> (Vec<usize>, Vec<Vec<usize>>) {
    let order = rng.permutation(hg.num_edges());
    let edges = order
        .iter()
        .map(|&e| {
            let mut members = hg.edge(e).to_vec();
            rng.shuffle(&mut members);
            members
        })
        .collect();
    (order, edges)
}

/// Relative deviation between canonical and shuffled evaluation.
fn permutation_triple(kind: &str, seed: u64, index: usize) -> Result<f64> {
    const WIDTH: usize = 3;
    let mut rng = Rng::with_stream(seed, index as u64);
    let hg = random_hypergraph(&mut rng, 12, 5);
    let n = hg.num_nodes();
    let x = random_matrix(&mut rng, n, WIDTH, 0.1, 1.0);
    let mut params = ParamSet::new();
    if let Some(spec) = allset_spec(kind, WIDTH) {
        let layer = AllSetLayer::new(&mut params, "layer", &spec, WIDTH, None, &mut rng)?;
        let g = AllSetGraph::with_pairs(&hg, usize::MAX)?;
        let shuffled = g.shuffled(&mut rng);
        let (a, _) = layer.apply(&params, &g, &x, None)?;
        let (b, _) = layer.apply(&params, &shuffled, &x, None)?;
        return Ok(a.max_rel_diff(&b, f64::MIN_POSITIVE));
    }
    let th = params.add("theta", random_matrix(&mut rng, WIDTH, WIDTH, -1.0, 1.0));
    let th2 = params.add("theta_edge", random_matrix(&mut rng, WIDTH, WIDTH, -1.0, 1.0));
    let b = params.add("bias", random_matrix(&mut rng, 1, WIDTH, -0.5, 0.5));
    let z = random_matrix(&mut rng, hg.num_edges(), 2, -1.0, 1.0);
    let a = params.add("attention", random_matrix(&mut rng, WIDTH + 2, 1, -1.0, 1.0));
    let (order, raw) = scrambled_edges(&hg, &mut rng);
    let other = Hypergraph::from_edge_list(n, &raw, None)?;
    let other_z = z.select_rows(&order);
    let eval = |hg: &Hypergraph, z: &DenseMatrix| -> Result<DenseMatrix> {
        let mut t = Tape::new();
        let p = t.bind(&params);
        let xv = t.constant(x.clone());
        let zv = t.constant(z.clone());
        let act = Activation::Elu;
        let y = match kind {
            "HGNN" => HgnnLayer::new(hg).forward(&mut t, xv, p[th], p[b], act)?,
            "HNHN" => {
                let l = HnhnLayer::new(hg, HnhnParams::default())?;
                l.forward(&mut t, xv, p[th2], p[b], p[th], p[b], act)?.0
            }
            "HCHA" => HchaLayer::new(hg).forward(&mut t, xv, Some((zv, p[a])), p[th], p[b], act)?,
            "HyperGCN" => {
                let kept: Vec<&[usize]> = hg.edges().iter().filter(|e| e.len() >= 2).map(|e| e.as_slice()).collect();
                let hg = Hypergraph::from_edge_list(hg.num_nodes(), &kept, None)?;
                hypergcn_layer(&mut t, &hg, xv, p[th], p[b], act)?
            }
            "HyperSAGE" => HyperSageLayer::new(hg, 2.0).forward(&mut t, xv, p[th], act)?,
            other => return Err(Error::InvalidConfig(format!("unknown layer kind {other}"))),
        };
        Ok(t.value(y).clone())
    };
    let a = eval(&hg, &z)?;
    let b = eval(&other, &other_z)?;
    Ok(a.max_rel_diff(&b, f64::MIN_POSITIVE))
}

/// Criterion 4: outputs do not depend on the order of any multiset.
pub fn permutation_invariance(seed: u64) -> CriterionReport {
    let start = Instant::now();
    let required = format!("relative error < {PERMUTATION_TOLERANCE:e} over {PERMUTATION_TRIPLES} triples per layer kind");
    let mut worst = 0.0f64;
    let mut worst_kind = "";
    for (k, kind) in PERMUTATION_KINDS.iter().enumerate() {
        let dev = (0..PERMUTATION_TRIPLES)
            .into_par_iter()
            .map(|i| permutation_triple(kind, seed.wrapping_add(k as u64 * 1000), i))
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)));
        match dev {
            Ok(d) if d >= worst => {
                worst = d;
                worst_kind = kind;
            }
            Ok(_) => {}
            Err(e) => return CriterionReport::failed(4, "permutation invariance", &e, required, start.elapsed()),
        }
    }
    let elapsed = start.elapsed();
    let passed = worst < PERMUTATION_TOLERANCE;
    let measured = format!("max {worst:.2e} (worst kind {worst_kind}) over {} layer kinds", PERMUTATION_KINDS.len());
    CriterionReport::new(4, "permutation invariance", passed, measured, required, elapsed).with_value(worst)
}

/// Multisets of 1 to 8 scalars in `[0, 1)` and their maxima.
fn max_dataset(rng: &mut Rng, count: usize) -> Result<(Grouping, DenseMatrix, DenseMatrix)> {
    let mut values = Vec::new();
    let mut lists = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for _ in 0..count {
        let size = 1 + rng.index(8);
        let start = values.len();
        let mut best = 0.0f64;
        for _ in 0..size {
            let v = rng.uniform(0.0, 1.0);
            best = best.max(v);
            values.push(v);
        }
        lists.push((start..start + size).collect());
        targets.push(best);
    }
    let g = Grouping::from_lists(values.len(), &lists)?;
    Ok((g, DenseMatrix::column(&values)?, DenseMatrix::column(&targets)?))
}

fn mse(tape: &mut Tape, y: Var, target: &DenseMatrix) -> Result<Var> {
    let t = tape.constant(target.clone());
    let d = tape.sub(y, t)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean_all(sq))
}

/// Trains a deep-sets function to return the maximum of its multiset and
/// returns `(test MSE, steps taken)`.
pub fn fit_multiset_max(seed: u64) -> Result<(f64, usize)> {
    const HIDDEN: usize = 32;
    let mut rng = Rng::new(seed);
    let (train_g, train_x, train_y) = max_dataset(&mut rng, 512)?;
    let (test_g, test_x, test_y) = max_dataset(&mut rng, 512)?;
    let spec = MultisetFunctionSpec::new(AggregatorSpec::DeepSets {
        inner: MlpSpec::new(vec![1, HIDDEN, HIDDEN], Activation::Relu, true),
        outer: MlpSpec::new(vec![HIDDEN, HIDDEN, 1], Activation::Relu, true),
    });
    let mut params = ParamSet::new();
    let f = MultisetFunction::new(&mut params, "max", &spec, 1, None, &mut rng)?;
    let mut adam = AdamState::new(AdamConfig::new(3e-3, 0.0), &params);
    for _ in 0..MAX_FIT_STEPS {
        let mut tape = Tape::new();
        let p = tape.bind(&params);
        let x = tape.constant(train_x.clone());
        let y = f.forward(&mut tape, &p, &train_g, x, None)?;
        let loss = mse(&mut tape, y, &train_y)?;
        let grads = tape.backward(loss)?;
        let grads = p.grads(&tape, &grads);
        adam.step(&mut params, &grads)?;
    }
    let pred = f.apply(&params, &test_g, &test_x, None)?;
    let err = pred.sub(&test_y)?;
    let test_mse = err.data().iter().map(|e| e * e).sum::<f64>() / err.rows() as f64;
    Ok((test_mse, MAX_FIT_STEPS))
}

/// Criterion 5: a deep-sets multiset function learns the maximum.
pub fn deepsets_max_fit(seed: u64) -> CriterionReport {
    let start = Instant::now();
    let required = format!("test MSE < {MAX_FIT_MSE:e} within {MAX_FIT_STEPS} Adam steps");
    match fit_multiset_max(seed) {
        Ok((m, steps)) => CriterionReport::new(
            5,
            "deep-sets max fit",
            m < MAX_FIT_MSE && steps <= MAX_FIT_STEPS,
            format!("test MSE {m:.2e} after {steps} steps"),
            required,
            start.elapsed(),
        )
        .with_value(m),
        Err(e) => CriterionReport::failed(5, "deep-sets max fit", &e, required, start.elapsed()),
    }
}

/// The AllSetTransformer configuration used on Zoo.
pub fn zoo_transformer_config(dir: &Path, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(DatasetSource::Dir { dir: dir.to_path_buf() }, ModelKind::AllsetTransformer);
    c.lr = 0.01;
    c.wd = 1e-5;
    c.hidden = 64;
    c.heads = 1;
    c.runs = ZOO_RUNS;
    c.seed = seed;
    c
}

/// The MLP baseline on Zoo, on the same splits.
pub fn zoo_mlp_config(dir: &Path, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(DatasetSource::Dir { dir: dir.to_path_buf() }, ModelKind::Mlp);
    c.lr = 0.1;
    c.wd = 0.0;
    c.hidden = 64;
    c.runs = ZOO_RUNS;
    c.seed = seed;
    c
}

/// The AllSetTransformer configuration used on Cora.
pub fn cora_transformer_config(dir: &Path, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(DatasetSource::Dir { dir: dir.to_path_buf() }, ModelKind::AllsetTransformer);
    c.lr = 0.001;
    c.wd = 0.0;
    c.hidden = 64;
    c.heads = 4;
    c.runs = ZOO_RUNS;
    c.seed = seed;
    c
}

fn accuracies(r: &ExperimentResult) -> String {
    let a: Vec<String> = r.accuracies().iter().map(|a| format!("{a:.3}")).collect();
    format!("[{}]", a.join(", "))
}

/// Criteria 6, 8 and 9, sharing the Zoo transformer runs.
pub fn zoo_suite(opts: &ReproduceOptions) -> Vec<CriterionReport> {
    let dir = opts.zoo_dir();
    let req6 = format!("mean test accuracy >= {ZOO_MIN_ACCURACY} over {ZOO_RUNS} runs, < 600s");
    let req8 = format!("transformer mean >= MLP mean + {BASELINE_GAP}");
    let req9 = "identical per-run accuracies on a repeat".to_string();
    let start = Instant::now();
    let data = match load_dataset_dir(&dir) {
        Ok(d) => d,
        Err(e) => {
            let t = start.elapsed();
            return vec![
                CriterionReport::failed(6, "zoo reproduction", &e, req6, t),
                CriterionReport::failed(8, "zoo baseline ordering", &e, req8, t),
                CriterionReport::failed(9, "determinism", &e, req9, t),
            ];
        }
    };
    let ast_cfg = zoo_transformer_config(&dir, opts.seed);
    let first = run_experiment(&ast_cfg, &data, opts.jobs);
    let t6 = start.elapsed();
    let c6 = match &first {
        Ok(r) => CriterionReport::new(
            6,
            "zoo reproduction",
            r.mean >= ZOO_MIN_ACCURACY && within(t6, 600),
            format!("mean {:.4} {}", r.mean, accuracies(r)),
            req6,
            t6,
        )
        .with_value(r.mean),
        Err(e) => CriterionReport::failed(6, "zoo reproduction", e, req6, t6),
    };

    let start8 = Instant::now();
    let mlp = run_experiment(&zoo_mlp_config(&dir, opts.seed), &data, opts.jobs);
    let c8 = match (&first, &mlp) {
        (Ok(a), Ok(m)) => CriterionReport::new(
            8,
            "zoo baseline ordering",
            a.mean >= m.mean + BASELINE_GAP,
            format!("transformer {:.4} vs MLP {:.4} {} (gap {:+.4})", a.mean, m.mean, accuracies(m), a.mean - m.mean),
            req8,
            t6 + start8.elapsed(),
        )
        .with_value(a.mean - m.mean),
        (Err(e), _) | (_, Err(e)) => CriterionReport::failed(8, "zoo baseline ordering", e, req8, start8.elapsed()),
    };

    let start9 = Instant::now();
    let again = run_experiment(&ast_cfg, &data, opts.jobs);
    let c9 = match (&first, &again) {
        (Ok(a), Ok(b)) => {
            let same = a.accuracies().iter().zip(b.accuracies()).all(|(x, y)| x.to_bits() == y.to_bits())
                && a.runs.len() == b.runs.len();
            CriterionReport::new(
                9,
                "determinism",
                same,
                format!("{} vs {}", accuracies(a), accuracies(b)),
                req9,
                t6 + start9.elapsed(),
            )
            .with_value(if same { 1.0 } else { 0.0 })
        }
        (Err(e), _) | (_, Err(e)) => CriterionReport::failed(9, "determinism", e, req9, start9.elapsed()),
    };
    vec![c6, c8, c9]
}

/// Loads Cora from a bundle directory or from the raw LINQS files.
pub fn load_cora(dir: &Path) -> Result<DatasetBundle> {
    if dir.join(META_FILE).is_file() {
        load_dataset_dir(dir)
    } else {
        convert::read_cora_linqs(dir)
    }
}

/// Criterion 7: the Cora reproduction, which needs the dataset on disk.
pub fn cora_reproduction(opts: &ReproduceOptions) -> CriterionReport {
    let start = Instant::now();
    let required = format!("mean test accuracy >= {CORA_MIN_ACCURACY} over {ZOO_RUNS} runs, < 1800s");
    let dir = opts.cora_dir();
    let data = match load_cora(&dir) {
        Ok(d) => d,
        Err(e) => {
            let measured = format!("dataset unavailable at {} ({e})", dir.display());
            return CriterionReport::new(7, "cora reproduction", false, measured, required, start.elapsed());
        }
    };
    let cfg = cora_transformer_config(&dir, opts.seed);
    match run_experiment(&cfg, &data, opts.jobs) {
        Ok(r) => {
            let t = start.elapsed();
            CriterionReport::new(
                7,
                "cora reproduction",
                r.mean >= CORA_MIN_ACCURACY && within(t, 1800),
                format!("mean {:.4} {}", r.mean, accuracies(&r)),
                required,
                t,
            )
            .with_value(r.mean)
        }
        Err(e) => CriterionReport::failed(7, "cora reproduction", &e, required, start.elapsed()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_pool_sizes_are_binomials() {
        assert_eq!(uniform_edge_pool(6, 3).len(), 20);
        assert_eq!(uniform_edge_pool(5, 2).len(), 10);
        assert_eq!(uniform_edge_pool(4, 4), vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn targets_round_trip_through_names() {
        for t in Target::ALL {
            assert_eq!(Target::parse(t.name()), Some(t));
        }
        assert_eq!(Target::parse("nope"), None);
    }

    #[test]
    fn report_line_format() {
        let r = CriterionReport::new(3, "x", true, "m".into(), "r".into(), Duration::from_millis(1500));
        assert_eq!(r.line(), "PASS [3] x: m (required r) in 1.5s");
    }

    #[test]
    fn missing_cora_is_a_failure_not_a_panic() {
        let dir = tempfile::tempdir().unwrap();
        let mut opts = ReproduceOptions::new(dir.path());
        opts.cora_dir = None;
        let r = cora_reproduction(&opts);
        assert!(!r.passed);
        assert!(r.measured.contains("unavailable"));
    }
}
