//! Clique and star expansions, and the dense adjacency tensor of a uniform
//! hypergraph (used only as a brute-force oracle).

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

use super::Hypergraph;

/// Guard on `n^d` for [`build_adjacency_tensor`].
pub const MAX_TENSOR_ENTRIES: u128 = 10_000_000;

/// `H Hᵀ`: entry (u, v) counts the hyperedges containing both u and v, so the
/// diagonal holds node degrees.
pub fn clique_expansion_incidence(hg: &Hypergraph) -> DenseMatrix {
    let n = hg.num_nodes();
    let mut m = DenseMatrix::zeros(n, n);
    for e in hg.edges() {
        for &u in e {
            for &v in e {
                let cur = m.get(u, v);
                m.set(u, v, cur + 1.0);
            }
        }
    }
    m
}

/// Co-membership counts with a zero diagonal.
///
/// For a d-uniform hypergraph without repeated edges this is the pairwise
/// marginal of the adjacency tensor; for other inputs it is the `H Hᵀ`
/// convention with the diagonal removed.
pub fn clique_expansion_adjacency(hg: &Hypergraph) -> DenseMatrix {
    let mut m = clique_expansion_incidence(hg);
    for v in 0..hg.num_nodes() {
        m.set(v, v, 0.0);
    }
    m
}

/// One `(node, edge)` pair per incidence, edge-major.
pub fn star_expansion(hg: &Hypergraph) -> Vec<(usize, usize)> {
    hg.edges()
        .iter()
        .enumerate()
        .flat_map(|(e, members)| members.iter().map(move |&v| (v, e)))
        .collect()
}

/// Inverse of [`star_expansion`]: regroups incidences by edge id.
pub fn from_star(n: usize, m: usize, pairs: &[(usize, usize)]) -> Result<Hypergraph> {
    let mut edges = vec![Vec::new(); m];
    for &(v, e) in pairs {
        if e >= m {
            return Err(Error::DimensionMismatch(format!(
                "edge id {e} in star expansion with {m} edges"
            )));
        }
        edges[e].push(v);
    }
    Hypergraph::from_edge_list(n, &edges, None)
}

/// Supersymmetric order-d adjacency tensor stored densely (`n^d` entries).
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyTensor {
    n: usize,
    d: usize,
    entries: Vec<f64>,
}

impl AdjacencyTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.d
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        assert_eq!(idx.len(), self.d);
        self.entries[self.offset(idx)]
    }

    /// `Σ_{i3..id} A[i, j, i3, .., id]` as an n×n matrix.
    pub fn pair_marginal(&self) -> DenseMatrix {
        let n = self.n;
        let mut out = DenseMatrix::zeros(n, n);
        if n == 0 {
            return out;
        }
        let block = n.pow((self.d - 2) as u32);
        for i in 0..n {
            for j in 0..n {
                let start = (i * n + j) * block;
                let s: f64 = self.entries[start..start + block].iter().sum();
                out.set(i, j, s);
            }
        }
        out
    }

    /// `A x^{d-1}`: `y_v = Σ_{i2..id} A[v, i2, .., id] x_{i2} ⋯ x_{id}`,
    /// applied independently to every feature column of `x`.
    pub fn contract(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        if x.rows() != self.n {
            return Err(Error::shape(
                "AdjacencyTensor::contract",
                format!("{} rows for {} nodes", x.rows(), self.n),
            ));
        }
        let n = self.n;
        let mut out = DenseMatrix::zeros(n, x.cols());
        if n == 0 {
            return Ok(out);
        }
        let tail = self.d - 1;
        let block = n.pow(tail as u32);
        let mut idx = vec![0usize; tail];
        for v in 0..n {
            for flat in 0..block {
                let a = self.entries[v * block + flat];
                if a == 0.0 {
                    continue;
                }
                let mut rem = flat;
                for slot in idx.iter_mut().rev() {
                    *slot = rem % n;
                    rem /= n;
                }
                for c in 0..x.cols() {
                    let prod: f64 = idx.iter().map(|&i| x.get(i, c)).product();
                    let cur = out.get(v, c);
                    out.set(v, c, cur + a * prod);
                }
            }
        }
        Ok(out)
    }
}

/// Dense adjacency tensor of a d-uniform hypergraph.
///
/// Entries at every ordering of a hyperedge's nodes equal `1/(d-2)!`; all
/// others are 0. Hyperedges are treated as a set here, so a repeated edge
/// writes the same entries again rather than accumulating.
pub fn build_adjacency_tensor(hg: &Hypergraph, d: usize) -> Result<AdjacencyTensor> {
    if d < 2 {
        return Err(Error::InvalidConfig(format!(
            "adjacency tensor order must be at least 2, got {d}"
        )));
    }
    hg.require_uniform(d)?;
    let n = hg.num_nodes();
    let entries = (n as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if entries > MAX_TENSOR_ENTRIES {
        return Err(Error::TooLarge {
            entries,
            limit: MAX_TENSOR_ENTRIES,
        });
    }
    let coefficient = 1.0 / factorial(d - 2);
    let mut tensor = AdjacencyTensor {
        n,
        d,
        entries: vec![0.0; entries as usize],
    };
    for e in hg.edges() {
        let mut order = e.clone();
        loop {
            let off = tensor.offset(&order);
            tensor.entries[off] = coefficient;
            if !next_permutation(&mut order) {
                break;
            }
        }
    }
    Ok(tensor)
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Lexicographic successor; returns false after the last permutation.
fn next_permutation(xs: &mut [usize]) -> bool {
    if xs.len() < 2 {
        return false;
    }
    let mut i = xs.len() - 1;
    while i > 0 && xs[i - 1] >= xs[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = xs.len() - 1;
    while xs[j] <= xs[i - 1] {
        j -= 1;
    }
    xs.swap(i - 1, j);
    xs[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hg(n: usize, edges: &[&[usize]]) -> Hypergraph {
        Hypergraph::from_edge_list(n, edges, None).unwrap()
    }

    #[test]
    fn single_pair_expansions() {
        let g = hg(2, &[&[0, 1]]);
        assert_eq!(clique_expansion_incidence(&g).data(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(clique_expansion_adjacency(&g).data(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(star_expansion(&g), vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn co_membership_counts() {
        let g = hg(3, &[&[0, 1, 2], &[1, 2]]);
        let m = clique_expansion_incidence(&g);
        assert_eq!([m.get(0, 0), m.get(1, 1), m.get(2, 2)], [1.0, 2.0, 2.0]);
        assert_eq!(m.get(1, 2), 2.0);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 2), 1.0);
        assert_eq!(m, m.transpose());
    }

    #[test]
    fn no_edges() {
        let g = hg(3, &[]);
        assert_eq!(clique_expansion_incidence(&g).max_abs(), 0.0);
        assert_eq!(clique_expansion_adjacency(&g).max_abs(), 0.0);
        assert!(star_expansion(&g).is_empty());
        let t = build_adjacency_tensor(&g, 3).unwrap();
        assert!(t.entries().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn three_uniform_adjacency_is_all_ones_off_diagonal() {
        let g = hg(3, &[&[0, 1, 2]]);
        let a = clique_expansion_adjacency(&g);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
    }

    #[test]
    fn tensor_entries() {
        let t = build_adjacency_tensor(&hg(2, &[&[0, 1]]), 2).unwrap();
        assert_eq!(t.entries(), &[0.0, 1.0, 1.0, 0.0]);

        let t = build_adjacency_tensor(&hg(3, &[&[0, 1, 2]]), 3).unwrap();
        let nonzero: Vec<_> = t.entries().iter().filter(|&&a| a != 0.0).collect();
        assert_eq!(nonzero.len(), 6);
        assert!(nonzero.iter().all(|&&a| a == 1.0));
        assert_eq!(t.get(&[2, 0, 1]), 1.0);
        assert_eq!(t.get(&[0, 0, 1]), 0.0);
    }

    #[test]
    fn tensor_guards() {
        assert!(matches!(
            build_adjacency_tensor(&hg(3, &[&[0, 1], &[0, 1, 2]]), 2),
            Err(Error::NotUniform { d: 2, edge: 1, size: 3 })
        ));
        let big = hg(200, &[&[0, 1, 2, 3]]);
        assert!(matches!(
            build_adjacency_tensor(&big, 4),
            Err(Error::TooLarge { .. })
        ));
    }

    #[test]
    fn star_round_trip() {
        let g = hg(5, &[&[0, 3], &[1, 2, 4], &[3]]);
        let back = from_star(5, 3, &star_expansion(&g)).unwrap();
        assert_eq!(back, g);
    }

    /// Distinct d-subsets of 0..n chosen by a bitmask.
    fn uniform_from_mask(n: usize, d: usize, mask: u64) -> Hypergraph {
        let subsets = subsets(n, d);
        let edges: Vec<Vec<usize>> = subsets
            .into_iter()
            .enumerate()
            .filter(|(i, _)| mask >> (i % 64) & 1 == 1)
            .map(|(_, s)| s)
            .collect();
        Hypergraph::from_edge_list(n, &edges, None).unwrap()
    }

    fn subsets(n: usize, d: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
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
        rec(0, n, d, &mut cur, &mut out);
        out
    }

    proptest! {
        #[test]
        fn marginal_equals_clique_adjacency(n in 2usize..=8, d in 2usize..=4, mask in any::<u64>()) {
            prop_assume!(d <= n);
            let g = uniform_from_mask(n, d, mask);
            let t = build_adjacency_tensor(&g, d).unwrap();
            prop_assert_eq!(t.pair_marginal(), clique_expansion_adjacency(&g));
        }

        #[test]
        fn incidence_minus_adjacency_is_degree_diagonal(g in crate::hypergraph::tests::arb_hypergraph()) {
            let diff = clique_expansion_incidence(&g).sub(&clique_expansion_adjacency(&g)).unwrap();
            for u in 0..g.num_nodes() {
                for v in 0..g.num_nodes() {
                    let want = if u == v { g.degree(v) as f64 } else { 0.0 };
                    prop_assert_eq!(diff.get(u, v), want);
                }
            }
        }

        #[test]
        fn tensor_is_supersymmetric(n in 3usize..=6, mask in any::<u64>(), a in 0usize..6, b in 0usize..6, c in 0usize..6) {
            let g = uniform_from_mask(n, 3, mask);
            let t = build_adjacency_tensor(&g, 3).unwrap();
            let (a, b, c) = (a % n, b % n, c % n);
            let v = t.get(&[a, b, c]);
            for p in [[a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]] {
                prop_assert_eq!(t.get(&p), v);
            }
        }
    }
}
