//! Immutable hypergraphs with a dual incidence index.
//!
//! Hyperedges are sets: raw node lists are deduplicated and sorted on
//! ingestion, so every downstream aggregation iterates members in ascending
//! id order. Duplicate hyperedges are kept as distinct edges.

mod expansion;
mod format;
mod stats;

pub use expansion::{
    build_adjacency_tensor, clique_expansion_adjacency, clique_expansion_incidence, from_star,
    star_expansion, AdjacencyTensor, MAX_TENSOR_ENTRIES,
};
pub use format::{parse_hg, read_hg, serialize_hg, write_hg};
pub use stats::{stats, HypergraphStats, SizeSummary};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// For each node, the ascending ids of the hyperedges containing it.
///
/// `edge_to_nodes` is the hypergraph's own edge list; only the node side is
/// stored here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncidenceIndex {
    node_to_edges: Vec<Vec<usize>>,
}

impl IncidenceIndex {
    fn build(n: usize, edges: &[Vec<usize>]) -> Self {
        let mut node_to_edges = vec![Vec::new(); n];
        for (e, members) in edges.iter().enumerate() {
            for &v in members {
                node_to_edges[v].push(e);
            }
        }
        Self { node_to_edges }
    }

    pub fn node_to_edges(&self) -> &[Vec<usize>] {
        &self.node_to_edges
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypergraph {
    n: usize,
    edges: Vec<Vec<usize>>,
    weights: Option<Vec<f64>>,
    incidence: IncidenceIndex,
}

impl Hypergraph {
    /// Validates and canonicalizes a raw edge list.
    ///
    /// Node ids inside each edge are sorted and deduplicated. Edges that end
    /// up empty are rejected, as are non-positive weights.
    pub fn from_edge_list<E: AsRef<[usize]>>(
        n: usize,
        raw_edges: &[E],
        weights: Option<Vec<f64>>,
    ) -> Result<Self> {
        let mut edges = Vec::with_capacity(raw_edges.len());
        for (e, raw) in raw_edges.iter().enumerate() {
            let mut members = raw.as_ref().to_vec();
            if let Some(&id) = members.iter().find(|&&v| v >= n) {
                return Err(Error::NodeIdOutOfRange { id, n, edge: e });
            }
            members.sort_unstable();
            members.dedup();
            if members.is_empty() {
                return Err(Error::EmptyEdge { edge: e });
            }
            edges.push(members);
        }
        if let Some(w) = &weights {
            if w.len() != edges.len() {
                return Err(Error::WeightCount {
                    expected: edges.len(),
                    got: w.len(),
                });
            }
            if let Some((edge, &weight)) = w
                .iter()
                .enumerate()
                .find(|(_, w)| !(w.is_finite() && **w > 0.0))
            {
                return Err(Error::NonpositiveWeight { edge, weight });
            }
        }
        let incidence = IncidenceIndex::build(n, &edges);
        Ok(Self {
            n,
            edges,
            weights,
            incidence,
        })
    }

    /// Node count, including isolated nodes.
    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    #[inline]
    pub fn edge(&self, e: usize) -> &[usize] {
        &self.edges[e]
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// `w_e`, defaulting to 1.
    #[inline]
    pub fn weight(&self, e: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[e])
    }

    pub fn incidence(&self) -> &IncidenceIndex {
        &self.incidence
    }

    /// Hyperedges containing `v`, ascending.
    #[inline]
    pub fn node_edges(&self, v: usize) -> &[usize] {
        &self.incidence.node_to_edges[v]
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.incidence.node_to_edges[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.incidence.node_to_edges.iter().map(Vec::len).collect()
    }

    pub fn edge_sizes(&self) -> Vec<usize> {
        self.edges.iter().map(Vec::len).collect()
    }

    /// Total number of (node, hyperedge) incidences.
    pub fn num_incidences(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// `Some(d)` when every edge has exactly `d` nodes. An edgeless
    /// hypergraph has no order.
    pub fn uniform_order(&self) -> Option<usize> {
        let d = self.edges.first()?.len();
        self.edges.iter().all(|e| e.len() == d).then_some(d)
    }

    pub(crate) fn require_uniform(&self, d: usize) -> Result<()> {
        match self.edges.iter().enumerate().find(|(_, e)| e.len() != d) {
            Some((edge, e)) => Err(Error::NotUniform {
                d,
                edge,
                size: e.len(),
            }),
            None => Ok(()),
        }
    }

    /// Renames node `v` to `perm[v]`. `perm` must be a permutation of `0..n`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::shape(
                "relabel",
                format!("permutation of length {} for {} nodes", perm.len(), self.n),
            ));
        }
        let edges: Vec<Vec<usize>> = self
            .edges
            .iter()
            .map(|e| e.iter().map(|&v| perm[v]).collect())
            .collect();
        Self::from_edge_list(self.n, &edges, self.weights.clone())
    }

    /// Reorders hyperedges so that new edge `i` is old edge `order[i]`.
    pub fn reorder_edges(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.edges.len() {
            return Err(Error::shape(
                "reorder_edges",
                format!("{} indices for {} edges", order.len(), self.edges.len()),
            ));
        }
        let edges: Vec<Vec<usize>> = order.iter().map(|&i| self.edges[i].clone()).collect();
        let weights = self
            .weights
            .as_ref()
            .map(|w| order.iter().map(|&i| w[i]).collect());
        Self::from_edge_list(self.n, &edges, weights)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn path_of_two_edges() {
        let hg = Hypergraph::from_edge_list(3, &[vec![0, 1], vec![1, 2]], None).unwrap();
        assert_eq!(hg.num_edges(), 2);
        assert_eq!(hg.degrees(), vec![1, 2, 1]);
        assert_eq!(hg.node_edges(1), &[0, 1]);
    }

    #[test]
    fn dedup_and_sort_within_edge() {
        let hg = Hypergraph::from_edge_list(2, &[vec![1, 0, 1]], None).unwrap();
        assert_eq!(hg.edge(0), &[0, 1]);
    }

    #[test]
    fn ingestion_errors() {
        assert!(matches!(
            Hypergraph::from_edge_list(2, &[vec![0, 2]], None),
            Err(Error::NodeIdOutOfRange { id: 2, n: 2, edge: 0 })
        ));
        let empty: Vec<Vec<usize>> = vec![vec![0], vec![]];
        assert!(matches!(
            Hypergraph::from_edge_list(2, &empty, None),
            Err(Error::EmptyEdge { edge: 1 })
        ));
        assert!(matches!(
            Hypergraph::from_edge_list(2, &[vec![0], vec![1]], Some(vec![1.0, 0.0])),
            Err(Error::NonpositiveWeight { edge: 1, .. })
        ));
        assert!(matches!(
            Hypergraph::from_edge_list(2, &[vec![0]], Some(vec![1.0, 2.0])),
            Err(Error::WeightCount { .. })
        ));
    }

    #[test]
    fn duplicate_edges_are_kept() {
        let hg = Hypergraph::from_edge_list(2, &[vec![0, 1], vec![1, 0]], None).unwrap();
        assert_eq!(hg.num_edges(), 2);
        assert_eq!(hg.degrees(), vec![2, 2]);
    }

    #[test]
    fn isolated_nodes_and_singletons() {
        let hg = Hypergraph::from_edge_list(4, &[vec![2]], None).unwrap();
        assert_eq!(hg.degrees(), vec![0, 0, 1, 0]);
        assert_eq!(hg.uniform_order(), Some(1));
    }

    pub(crate) fn arb_hypergraph() -> impl Strategy<Value = Hypergraph> {
        (1usize..10).prop_flat_map(|n| {
            proptest::collection::vec(proptest::collection::vec(0..n, 1..5), 0..8)
                .prop_map(move |edges| Hypergraph::from_edge_list(n, &edges, None).unwrap())
        })
    }

    proptest! {
        #[test]
        fn incidence_is_dual_consistent(hg in arb_hypergraph()) {
            for (e, members) in hg.edges().iter().enumerate() {
                for &v in members {
                    prop_assert!(hg.node_edges(v).contains(&e));
                }
            }
            for v in 0..hg.num_nodes() {
                for &e in hg.node_edges(v) {
                    prop_assert!(hg.edge(e).contains(&v));
                }
                prop_assert!(hg.node_edges(v).windows(2).all(|w| w[0] < w[1]));
            }
            let by_node: usize = hg.degrees().iter().sum();
            prop_assert_eq!(by_node, hg.num_incidences());
        }

        #[test]
        fn relabel_preserves_degree_multiset(hg in arb_hypergraph(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut perm: Vec<usize> = (0..hg.num_nodes()).collect();
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let moved = hg.relabel(&perm).unwrap();
            for v in 0..hg.num_nodes() {
                prop_assert_eq!(hg.degree(v), moved.degree(perm[v]));
            }
        }
    }
}
