//! A Wengert tape over dense matrices.
//!
//! Nodes are appended in evaluation order, so the tape index is already a
//! topological order and the backward pass is a single reverse sweep. A tape
//! is built per forward pass and dropped afterwards; learnable values live in
//! a [`ParamSet`](super::ParamSet) and enter the tape as leaves.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::rng::Rng;
use crate::sparse::CsrMatrix;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Elu(Var),
    LeakyRelu(Var, f64),
    Powf(Var, f64),
    RowSoftmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: DenseMatrix,
        inv_std: Vec<f64>,
    },
    Spmm(Arc<CsrMatrix>, Var),
    SegmentProd(Var, Arc<Vec<usize>>),
    SegmentSoftmax(Var, Arc<Vec<usize>>),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Transpose(Var),
    SumAll(Var),
    RowSum(Var),
    CrossEntropy {
        logits: Var,
        labels: Arc<Vec<usize>>,
        rows: Arc<Vec<usize>>,
        probs: DenseMatrix,
    },
}

#[derive(Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one backward pass, indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    /// `None` when `v` does not require gradients or did not influence the
    /// output.
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `shape`.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> DenseMatrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| DenseMatrix::zeros(shape.0, shape.1))
    }
}

fn check_offsets(op: &'static str, offsets: &[usize], rows: usize) -> Result<()> {
    let ok = offsets.first() == Some(&0)
        && offsets.last() == Some(&rows)
        && offsets.windows(2).all(|w| w[0] <= w[1]);
    if !ok {
        return Err(Error::shape(
            op,
            format!("segment offsets do not partition {rows} rows"),
        ));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseMatrix, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf treated as a constant.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// `x + row` with a 1×C `row` broadcast over rows.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let value = self.broadcast_row("add_row", x, row, |a, b| a + b)?;
        Ok(self.push(value, Op::AddRow(x, row), &[x, row]))
    }

    /// `x ⊙ row` with a 1×C `row` broadcast over rows.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let value = self.broadcast_row("mul_row", x, row, |a, b| a * b)?;
        Ok(self.push(value, Op::MulRow(x, row), &[x, row]))
    }

    fn broadcast_row(
        &self,
        op: &'static str,
        x: Var,
        row: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(Error::shape(
                op,
                format!("row {:?} against {:?}", rv.shape(), xv.shape()),
            ));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *o = f(*o, *b);
            }
        }
        Ok(out)
    }

    /// Scales row i of `x` by `col[i]` (an n×1 column).
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (xv, cv) = (self.value(x), self.value(col));
        if cv.cols() != 1 || cv.rows() != xv.rows() {
            return Err(Error::shape(
                "mul_col",
                format!("column {:?} against {:?}", cv.shape(), xv.shape()),
            ));
        }
        let mut out = xv.clone();
        for r in 0..out.rows() {
            let s = cv.get(r, 0);
            out.row_mut(r).iter_mut().for_each(|o| *o *= s);
        }
        Ok(self.push(out, Op::MulCol(x, col), &[x, col]))
    }

    /// Scales row i of `x` by a constant `factors[i]`.
    pub fn scale_rows(&mut self, x: Var, factors: &[f64]) -> Result<Var> {
        let col = self.constant(DenseMatrix::from_raw(factors.len(), 1, factors.to_vec()));
        self.mul_col(x, col)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let value = self.value(x).scale(s);
        self.push(value, Op::Scale(x, s), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(0.0));
        self.push(value, Op::Relu(x), &[x])
    }

    /// ELU with α = 1.
    pub fn elu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { v.exp_m1() });
        self.push(value, Op::Elu(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        self.push(value, Op::LeakyRelu(x, slope), &[x])
    }

    /// Elementwise `x^p`. Callers guarantee a valid base (non-negative for
    /// non-integer `p`).
    pub fn powf(&mut self, x: Var, p: f64) -> Var {
        let value = self.value(x).map(|v| pow(v, p));
        self.push(value, Op::Powf(x, p), &[x])
    }

    /// Softmax along each row, with max subtraction.
    pub fn row_softmax(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for r in 0..value.rows() {
            softmax_in_place(value.row_mut(r));
        }
        self.push(value, Op::RowSoftmax(x), &[x])
    }

    /// Per-row normalization to zero mean and unit (biased) variance,
    /// followed by `⊙ gain + bias` with 1×C `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let c = xv.cols();
        for (name, p) in [("gain", gain), ("bias", bias)] {
            if self.shape(p) != (1, c) {
                return Err(Error::shape(
                    "layer_norm",
                    format!("{name} {:?} for {c} columns", self.shape(p)),
                ));
            }
        }
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let row = xhat.row_mut(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * is);
            inv_std.push(is);
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let mut out = xhat.clone();
        for r in 0..out.rows() {
            for ((o, gj), bj) in out.row_mut(r).iter_mut().zip(g.data()).zip(b.data()) {
                *o = *o * gj + bj;
            }
        }
        let op = Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        };
        Ok(self.push(out, op, &[x, gain, bias]))
    }

    /// `op · x` for a constant sparse `op`.
    pub fn spmm(&mut self, op: Arc<CsrMatrix>, x: Var) -> Result<Var> {
        if op.cols() != self.value(x).rows() {
            return Err(Error::shape(
                "spmm",
                format!("{}x{} times {:?}", op.rows(), op.cols(), self.shape(x)),
            ));
        }
        let value = op.mul_dense(self.value(x));
        Ok(self.push(value, Op::Spmm(op, x), &[x]))
    }

    /// Row `i` of the result is row `idx[i]` of `x`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let rows = self.value(x).rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::shape(
                "gather_rows",
                format!("index {bad} into {rows} rows"),
            ));
        }
        self.spmm(Arc::new(CsrMatrix::gather(rows, idx)), x)
    }

    /// Columnwise product over each run of rows `offsets[s]..offsets[s+1]`.
    /// Empty segments produce zero rows.
    pub fn segment_prod(&mut self, x: Var, offsets: Arc<Vec<usize>>) -> Result<Var> {
        let xv = self.value(x);
        check_offsets("segment_prod", &offsets, xv.rows())?;
        let f = xv.cols();
        let mut out = DenseMatrix::zeros(offsets.len() - 1, f);
        for (s, w) in offsets.windows(2).enumerate() {
            if w[0] == w[1] {
                continue;
            }
            let dst = out.row_mut(s);
            dst.iter_mut().for_each(|v| *v = 1.0);
            for r in w[0]..w[1] {
                for (o, v) in dst.iter_mut().zip(xv.row(r)) {
                    *o *= v;
                }
            }
        }
        Ok(self.push(out, Op::SegmentProd(x, offsets), &[x]))
    }

    /// Columnwise softmax within each run of rows.
    pub fn segment_softmax(&mut self, x: Var, offsets: Arc<Vec<usize>>) -> Result<Var> {
        let xv = self.value(x);
        check_offsets("segment_softmax", &offsets, xv.rows())?;
        let f = xv.cols();
        let mut out = xv.clone();
        for w in offsets.windows(2) {
            if w[0] == w[1] {
                continue;
            }
            for c in 0..f {
                let max = (w[0]..w[1]).map(|r| xv.get(r, c)).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for r in w[0]..w[1] {
                    let e = (xv.get(r, c) - max).exp();
                    out.set(r, c, e);
                    total += e;
                }
                for r in w[0]..w[1] {
                    let v = out.get(r, c) / total;
                    out.set(r, c, v);
                }
            }
        }
        Ok(self.push(out, Op::SegmentSoftmax(x, offsets), &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.value(p).rows());
        if let Some(&bad) = parts.iter().find(|&&p| self.value(p).rows() != rows) {
            return Err(Error::shape(
                "concat_cols",
                format!("{:?} in a concat of {rows}-row blocks", self.shape(bad)),
            ));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = DenseMatrix::from_raw(rows, cols, data);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Columns `start..start + width` of `x`.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + width > xv.cols() {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} of {:?}", start + width, xv.shape()),
            ));
        }
        let mut data = Vec::with_capacity(xv.rows() * width);
        for r in xv.iter_rows() {
            data.extend_from_slice(&r[start..start + width]);
        }
        let value = DenseMatrix::from_raw(xv.rows(), width, data);
        Ok(self.push(value, Op::SliceCols(x, start), &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.push(value, Op::Transpose(x), &[x])
    }

    /// Sum of all entries as a 1×1 matrix.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let value = DenseMatrix::from_raw(1, 1, vec![self.value(x).sum()]);
        self.push(value, Op::SumAll(x), &[x])
    }

    /// Mean of all entries as a 1×1 matrix.
    pub fn mean_all(&mut self, x: Var) -> Var {
        let count = self.value(x).data().len().max(1) as f64;
        let s = self.sum_all(x);
        self.scale(s, 1.0 / count)
    }

    /// Row sums as an n×1 column.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data: Vec<f64> = xv.iter_rows().map(|r| r.iter().sum()).collect();
        let value = DenseMatrix::from_raw(xv.rows(), 1, data);
        self.push(value, Op::RowSum(x), &[x])
    }

    /// Mean negative log-softmax probability of the true class over `rows`.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        labels: Arc<Vec<usize>>,
        rows: Arc<Vec<usize>>,
    ) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::EmptyMask);
        }
        let lv = self.value(logits);
        if labels.len() != lv.rows() {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} labels for {} rows", labels.len(), lv.rows()),
            ));
        }
        let mut probs = DenseMatrix::zeros(rows.len(), lv.cols());
        let mut loss = 0.0;
        for (k, &r) in rows.iter().enumerate() {
            let y = labels[r];
            if y >= lv.cols() {
                return Err(Error::shape(
                    "cross_entropy",
                    format!("label {y} with {} classes", lv.cols()),
                ));
            }
            let row = lv.row(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[y];
            let p = probs.row_mut(k);
            for (pj, v) in p.iter_mut().zip(row) {
                *pj = (v - lse).exp();
            }
        }
        let value = DenseMatrix::from_raw(1, 1, vec![loss / rows.len() as f64]);
        let op = Op::CrossEntropy {
            logits,
            labels,
            rows,
            probs,
        };
        Ok(self.push(value, op, &[logits]))
    }

    /// Inverted dropout; identity when `rate == 0`.
    pub fn dropout(&mut self, x: Var, rate: f64, rng: &mut Rng) -> Result<Var> {
        if rate <= 0.0 {
            return Ok(x);
        }
        let (r, c) = self.shape(x);
        let keep = 1.0 - rate;
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
            .collect();
        let m = self.constant(DenseMatrix::from_raw(r, c, mask));
        self.mul(x, m)
    }

    /// Reverse sweep from a 1×1 `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let (r, c) = self.shape(output);
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarOutput { rows: r, cols: c });
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; output.0 + 1];
        grads[output.0] = Some(DenseMatrix::filled(1, 1, 1.0));
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<DenseMatrix>], v: Var, contribution: DenseMatrix) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&contribution),
            slot @ None => *slot = Some(contribution),
        }
    }

    /// Mutable gradient slot for `v`, zero-initialized on first use.
    fn slot<'g>(&self, grads: &'g mut [Option<DenseMatrix>], v: Var) -> &'g mut DenseMatrix {
        let (r, c) = self.shape(v);
        grads[v.0].get_or_insert_with(|| DenseMatrix::zeros(r, c))
    }

    fn propagate(
        &self,
        op: &Op,
        out: &DenseMatrix,
        g: &DenseMatrix,
        grads: &mut [Option<DenseMatrix>],
    ) {
        let val = |v: Var| &self.nodes[v.0].value;
        let needs = |v: Var| self.nodes[v.0].requires_grad;
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if needs(*a) {
                    self.accumulate(grads, *a, g.matmul_t(val(*b)));
                }
                if needs(*b) {
                    self.accumulate(grads, *b, val(*a).t_matmul(g));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let c = g.zip_map(val(*b), |x, y| x * y).expect("shape");
                    self.accumulate(grads, *a, c);
                }
                if needs(*b) {
                    let c = g.zip_map(val(*a), |x, y| x * y).expect("shape");
                    self.accumulate(grads, *b, c);
                }
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, g.clone());
                if needs(*row) {
                    let mut s = DenseMatrix::zeros(1, g.cols());
                    for r in g.iter_rows() {
                        for (a, b) in s.data_mut().iter_mut().zip(r) {
                            *a += b;
                        }
                    }
                    self.accumulate(grads, *row, s);
                }
            }
            Op::MulRow(x, row) => {
                let (xv, rv) = (val(*x), val(*row));
                if needs(*x) {
                    let mut gx = g.clone();
                    for r in 0..gx.rows() {
                        for (a, b) in gx.row_mut(r).iter_mut().zip(rv.data()) {
                            *a *= b;
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
                if needs(*row) {
                    let mut s = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for ((a, gi), xi) in s.data_mut().iter_mut().zip(g.row(r)).zip(xv.row(r)) {
                            *a += gi * xi;
                        }
                    }
                    self.accumulate(grads, *row, s);
                }
            }
            Op::MulCol(x, col) => {
                let (xv, cv) = (val(*x), val(*col));
                if needs(*x) {
                    let mut gx = g.clone();
                    for r in 0..gx.rows() {
                        let s = cv.get(r, 0);
                        gx.row_mut(r).iter_mut().for_each(|v| *v *= s);
                    }
                    self.accumulate(grads, *x, gx);
                }
                if needs(*col) {
                    let data = (0..g.rows())
                        .map(|r| g.row(r).iter().zip(xv.row(r)).map(|(a, b)| a * b).sum())
                        .collect();
                    self.accumulate(grads, *col, DenseMatrix::from_raw(g.rows(), 1, data));
                }
            }
            Op::Scale(x, s) => self.accumulate(grads, *x, g.scale(*s)),
            Op::Relu(x) => {
                let c = g
                    .zip_map(val(*x), |gi, xi| if xi > 0.0 { gi } else { 0.0 })
                    .expect("shape");
                self.accumulate(grads, *x, c);
            }
            Op::Elu(x) => {
                let c = g
                    .zip_map(val(*x), |gi, xi| if xi > 0.0 { gi } else { gi * xi.exp() })
                    .expect("shape");
                self.accumulate(grads, *x, c);
            }
            Op::LeakyRelu(x, slope) => {
                let c = g
                    .zip_map(val(*x), |gi, xi| if xi > 0.0 { gi } else { gi * slope })
                    .expect("shape");
                self.accumulate(grads, *x, c);
            }
            Op::Powf(x, p) => {
                let p = *p;
                let c = g
                    .zip_map(val(*x), |gi, xi| {
                        if xi == 0.0 && p < 1.0 {
                            0.0
                        } else {
                            gi * p * pow(xi, p - 1.0)
                        }
                    })
                    .expect("shape");
                self.accumulate(grads, *x, c);
            }
            Op::RowSoftmax(x) => {
                let mut gx = g.clone();
                for r in 0..gx.rows() {
                    let y = out.row(r);
                    let dot: f64 = g.row(r).iter().zip(y).map(|(a, b)| a * b).sum();
                    for (gi, yi) in gx.row_mut(r).iter_mut().zip(y) {
                        *gi = yi * (*gi - dot);
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let gv = val(*gain);
                let c = g.cols() as f64;
                if needs(*x) {
                    let mut gx = DenseMatrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let dxhat: Vec<f64> =
                            g.row(r).iter().zip(gv.data()).map(|(a, b)| a * b).collect();
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(xhat.row(r)).map(|(a, b)| a * b).sum();
                        for ((o, d), xh) in gx.row_mut(r).iter_mut().zip(&dxhat).zip(xhat.row(r)) {
                            *o = inv_std[r] / c * (c * d - s1 - xh * s2);
                        }
                    }
                    self.accumulate(grads, *x, gx);
                }
                if needs(*gain) {
                    let mut s = DenseMatrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for ((a, gi), xh) in s.data_mut().iter_mut().zip(g.row(r)).zip(xhat.row(r)) {
                            *a += gi * xh;
                        }
                    }
                    self.accumulate(grads, *gain, s);
                }
                if needs(*bias) {
                    let mut s = DenseMatrix::zeros(1, g.cols());
                    for r in g.iter_rows() {
                        for (a, b) in s.data_mut().iter_mut().zip(r) {
                            *a += b;
                        }
                    }
                    self.accumulate(grads, *bias, s);
                }
            }
            Op::Spmm(p, x) => {
                if needs(*x) {
                    let acc = self.slot(grads, *x);
                    p.t_mul_accumulate(g, acc);
                }
            }
            Op::SegmentProd(x, offsets) => {
                let xv = val(*x);
                let f = xv.cols();
                let mut gx = DenseMatrix::zeros(xv.rows(), f);
                for (s, w) in offsets.windows(2).enumerate() {
                    let len = w[1] - w[0];
                    if len == 0 {
                        continue;
                    }
                    for c in 0..f {
                        // exclusive products via prefix and suffix passes
                        let mut prefix = vec![1.0; len + 1];
                        for k in 0..len {
                            prefix[k + 1] = prefix[k] * xv.get(w[0] + k, c);
                        }
                        let mut suffix = 1.0;
                        for k in (0..len).rev() {
                            gx.set(w[0] + k, c, g.get(s, c) * prefix[k] * suffix);
                            suffix *= xv.get(w[0] + k, c);
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::SegmentSoftmax(x, offsets) => {
                let mut gx = g.clone();
                for w in offsets.windows(2) {
                    for c in 0..g.cols() {
                        let dot: f64 = (w[0]..w[1]).map(|r| g.get(r, c) * out.get(r, c)).sum();
                        for r in w[0]..w[1] {
                            gx.set(r, c, out.get(r, c) * (g.get(r, c) - dot));
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = val(p).cols();
                    if needs(p) {
                        let mut part = DenseMatrix::zeros(g.rows(), w);
                        for r in 0..g.rows() {
                            part.row_mut(r).copy_from_slice(&g.row(r)[start..start + w]);
                        }
                        self.accumulate(grads, p, part);
                    }
                    start += w;
                }
            }
            Op::SliceCols(x, start) => {
                let (r, c) = self.shape(*x);
                let acc = self.slot(grads, *x);
                debug_assert_eq!(acc.shape(), (r, c));
                for i in 0..r {
                    let dst = &mut acc.row_mut(i)[*start..*start + g.cols()];
                    for (a, b) in dst.iter_mut().zip(g.row(i)) {
                        *a += b;
                    }
                }
            }
            Op::Transpose(x) => self.accumulate(grads, *x, g.transpose()),
            Op::SumAll(x) => {
                let (r, c) = self.shape(*x);
                self.accumulate(grads, *x, DenseMatrix::filled(r, c, g.get(0, 0)));
            }
            Op::RowSum(x) => {
                let (r, c) = self.shape(*x);
                let mut gx = DenseMatrix::zeros(r, c);
                for i in 0..r {
                    let gi = g.get(i, 0);
                    gx.row_mut(i).iter_mut().for_each(|v| *v = gi);
                }
                self.accumulate(grads, *x, gx);
            }
            Op::CrossEntropy {
                logits,
                labels,
                rows,
                probs,
            } => {
                let (r, c) = self.shape(*logits);
                let mut gx = DenseMatrix::zeros(r, c);
                let scale = g.get(0, 0) / rows.len() as f64;
                for (k, &row) in rows.iter().enumerate() {
                    let dst = gx.row_mut(row);
                    for (d, p) in dst.iter_mut().zip(probs.row(k)) {
                        *d += scale * p;
                    }
                    dst[labels[row]] -= scale;
                }
                self.accumulate(grads, *logits, gx);
            }
        }
    }
}

/// `x^p`, using integer powers when `p` is integral so negative bases work.
fn pow(x: f64, p: f64) -> f64 {
    if p.fract() == 0.0 && p.abs() < i32::MAX as f64 {
        x.powi(p as i32)
    } else {
        x.powf(p)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}
