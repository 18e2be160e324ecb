//! Parameter-free propagation rules evaluated directly from the incidence
//! structure.

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::matrix::DenseMatrix;

fn check_rows(op: &'static str, hg: &Hypergraph, x: &DenseMatrix) -> Result<()> {
    if x.rows() != hg.num_nodes() {
        return Err(Error::shape(
            op,
            format!("{} feature rows for {} nodes", x.rows(), hg.num_nodes()),
        ));
    }
    Ok(())
}

/// `X'_v = Σ_{e∋v} Σ_{u∈e} X_u`.
pub fn ce_prop_h(hg: &Hypergraph, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_rows("ce_prop_h", hg, x)?;
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for v in 0..hg.num_nodes() {
        for &e in hg.node_edges(v) {
            for &u in hg.edge(e) {
                accumulate(out.row_mut(v), x.row(u), 1.0);
            }
        }
    }
    Ok(out)
}

/// `X'_v = Σ_{e∋v} Σ_{u∈e∖v} X_u`.
pub fn ce_prop_a(hg: &Hypergraph, x: &DenseMatrix) -> Result<DenseMatrix> {
    check_rows("ce_prop_a", hg, x)?;
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    for v in 0..hg.num_nodes() {
        for &e in hg.node_edges(v) {
            for &u in hg.edge(e).iter().filter(|&&u| u != v) {
                accumulate(out.row_mut(v), x.row(u), 1.0);
            }
        }
    }
    Ok(out)
}

/// `X'_v = Σ_{e∋v} (d−1) Π_{u∈e∖v} X_u`, columnwise, on a `d`-uniform
/// hypergraph.
pub fn z_prop(hg: &Hypergraph, x: &DenseMatrix, d: usize) -> Result<DenseMatrix> {
    check_rows("z_prop", hg, x)?;
    hg.require_uniform(d)?;
    let coeff = d.saturating_sub(1) as f64;
    let mut out = DenseMatrix::zeros(x.rows(), x.cols());
    let mut prod = vec![0.0; x.cols()];
    for v in 0..hg.num_nodes() {
        for &e in hg.node_edges(v) {
            prod.iter_mut().for_each(|p| *p = 1.0);
            for &u in hg.edge(e).iter().filter(|&&u| u != v) {
                for (p, xu) in prod.iter_mut().zip(x.row(u)) {
                    *p *= xu;
                }
            }
            accumulate(out.row_mut(v), &prod, coeff);
        }
    }
    Ok(out)
}

/// The `(d−1)`-th root of [`z_prop`]; defined only for strictly positive
/// features.
pub fn h_prop(hg: &Hypergraph, x: &DenseMatrix, d: usize) -> Result<DenseMatrix> {
    check_rows("h_prop", hg, x)?;
    hg.require_uniform(d)?;
    if d < 2 {
        return Err(Error::InvalidConfig(format!("h_prop needs order >= 2, got {d}")));
    }
    for r in 0..x.rows() {
        for (c, &value) in x.row(r).iter().enumerate() {
            if value <= 0.0 {
                return Err(Error::NonPositiveInput { row: r, col: c, value });
            }
        }
    }
    let z = z_prop(hg, x, d)?;
    let root = 1.0 / (d - 1) as f64;
    Ok(z.map(|v| v.powf(root)))
}

fn accumulate(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}
