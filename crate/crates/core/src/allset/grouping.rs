//! The multisets a layer aggregates over.
//!
//! A [`Grouping`] lists, for every output row ("group"), the input rows
//! ("entries") it aggregates. Each entry also records the incidence it comes
//! from so that degree- and size-dependent weights can be computed.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hypergraph::Hypergraph;
use crate::rng::Rng;
use crate::sparse::CsrMatrix;

/// Upper bound on the per-incidence states materialized by the
/// per-aggregator variant.
pub const MAX_PAIR_STATES: usize = 1_000_000;

/// Degrees, hyperedge sizes and hyperedge weights of a hypergraph.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub node_degree: Vec<usize>,
    pub edge_size: Vec<usize>,
    pub edge_weight: Vec<f64>,
}

impl Structure {
    pub fn of(hg: &Hypergraph) -> Self {
        Self {
            node_degree: hg.degrees(),
            edge_size: hg.edge_sizes(),
            edge_weight: (0..hg.num_edges()).map(|e| hg.weight(e)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    NodeToEdge,
    EdgeToNode,
}

#[derive(Debug, Clone)]
pub struct Grouping {
    pub(crate) direction: Direction,
    pub(crate) offsets: Arc<Vec<usize>>,
    /// Input row of each entry.
    pub(crate) sources: Vec<usize>,
    /// Node and hyperedge of the incidence behind each entry.
    pub(crate) entry_node: Vec<usize>,
    pub(crate) entry_edge: Vec<usize>,
    /// Row of the previous state used as second argument, per group.
    pub(crate) group_row: Vec<usize>,
    /// Hyperedge a group belongs to, for node-to-hyperedge groupings.
    pub(crate) group_edge: Option<Vec<usize>>,
    pub(crate) num_sources: usize,
    pub(crate) structure: Option<Arc<Structure>>,
}

impl Grouping {
    /// One group per hyperedge over its member nodes.
    pub fn node_to_edge(hg: &Hypergraph, structure: Arc<Structure>) -> Self {
        let mut b = Builder::default();
        for (e, members) in hg.edges().iter().enumerate() {
            for &u in members {
                b.entry(u, u, e);
            }
            b.close(e);
        }
        b.finish(Direction::NodeToEdge, hg.num_nodes(), Some((0..hg.num_edges()).collect()), Some(structure))
    }

    /// One group per node over its incident hyperedges.
    pub fn edge_to_node(hg: &Hypergraph, structure: Arc<Structure>) -> Self {
        let mut b = Builder::default();
        for v in 0..hg.num_nodes() {
            for &e in hg.node_edges(v) {
                b.entry(e, v, e);
            }
            b.close(v);
        }
        b.finish(Direction::EdgeToNode, hg.num_edges(), None, Some(structure))
    }

    /// The per-incidence pair `(v, e)` list in hyperedge-major order, with one
    /// group per pair over `e ∖ {v}`, and one group per node over its pairs.
    pub fn pairs(hg: &Hypergraph, structure: Arc<Structure>, limit: usize) -> Result<(Self, Self)> {
        let states: usize = hg.edges().iter().map(|m| m.len() * m.len()).sum();
        if states > limit {
            return Err(Error::InstanceTooLarge { states, limit });
        }
        let mut pair_index = Vec::with_capacity(hg.num_incidences());
        let mut v2e = Builder::default();
        let mut node_pairs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); hg.num_nodes()];
        let mut group_edge = Vec::new();
        for (e, members) in hg.edges().iter().enumerate() {
            for &v in members {
                let p = pair_index.len();
                pair_index.push((v, e));
                for &u in members.iter().filter(|&&u| u != v) {
                    v2e.entry(u, u, e);
                }
                v2e.close(p);
                group_edge.push(e);
                node_pairs[v].push((p, e));
            }
        }
        let v2e = v2e.finish(Direction::NodeToEdge, hg.num_nodes(), Some(group_edge), Some(structure.clone()));
        let mut e2v = Builder::default();
        for (v, ps) in node_pairs.iter().enumerate() {
            for &(p, e) in ps {
                e2v.entry(p, v, e);
            }
            e2v.close(v);
        }
        let e2v = e2v.finish(Direction::EdgeToNode, pair_index.len(), None, Some(structure));
        Ok((v2e, e2v))
    }

    /// Groups given as explicit lists of input rows, with no hypergraph
    /// behind them.
    pub fn from_lists(num_sources: usize, lists: &[Vec<usize>]) -> Result<Self> {
        let mut b = Builder::default();
        for (g, list) in lists.iter().enumerate() {
            for &s in list {
                if s >= num_sources {
                    return Err(Error::shape("Grouping::from_lists", format!("row {s} of {num_sources}")));
                }
                b.entry(s, s, 0);
            }
            b.close(g);
        }
        Ok(b.finish(Direction::NodeToEdge, num_sources, None, None))
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn num_groups(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_entries(&self) -> usize {
        self.sources.len()
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.sources[self.offsets[g]..self.offsets[g + 1]]
    }

    pub fn group_len(&self, g: usize) -> usize {
        self.offsets[g + 1] - self.offsets[g]
    }

    /// 1.0 for nonempty groups, 0.0 for empty ones.
    pub fn nonempty_mask(&self) -> Vec<f64> {
        (0..self.num_groups())
            .map(|g| if self.group_len(g) > 0 { 1.0 } else { 0.0 })
            .collect()
    }

    /// Group index of every entry.
    pub(crate) fn entry_group(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_entries());
        for g in 0..self.num_groups() {
            out.extend(std::iter::repeat(g).take(self.group_len(g)));
        }
        out
    }

    /// `groups × sources` operator summing each group's entries with the
    /// given per-entry weights, in entry order.
    pub(crate) fn weighted_sum(&self, weights: Option<&[f64]>) -> CsrMatrix {
        CsrMatrix::from_rows(
            self.num_sources,
            self.offsets.windows(2).map(|w| {
                (w[0]..w[1]).map(move |k| (self.sources[k], weights.map_or(1.0, |ws| ws[k])))
            }),
        )
    }

    /// The same groups with the entries of every group in random order.
    pub fn shuffled(&self, rng: &mut Rng) -> Self {
        let mut order: Vec<usize> = Vec::with_capacity(self.num_entries());
        for w in self.offsets.windows(2) {
            let mut idx: Vec<usize> = (w[0]..w[1]).collect();
            rng.shuffle(&mut idx);
            order.extend(idx);
        }
        let pick = |v: &[usize]| order.iter().map(|&k| v[k]).collect::<Vec<_>>();
        Self {
            direction: self.direction,
            offsets: self.offsets.clone(),
            sources: pick(&self.sources),
            entry_node: pick(&self.entry_node),
            entry_edge: pick(&self.entry_edge),
            group_row: self.group_row.clone(),
            group_edge: self.group_edge.clone(),
            num_sources: self.num_sources,
            structure: self.structure.clone(),
        }
    }
}

#[derive(Default)]
struct Builder {
    offsets: Vec<usize>,
    sources: Vec<usize>,
    entry_node: Vec<usize>,
    entry_edge: Vec<usize>,
    group_row: Vec<usize>,
}

impl Builder {
    fn entry(&mut self, source: usize, node: usize, edge: usize) {
        self.sources.push(source);
        self.entry_node.push(node);
        self.entry_edge.push(edge);
    }

    fn close(&mut self, row: usize) {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        self.offsets.push(self.sources.len());
        self.group_row.push(row);
    }

    fn finish(
        mut self,
        direction: Direction,
        num_sources: usize,
        group_edge: Option<Vec<usize>>,
        structure: Option<Arc<Structure>>,
    ) -> Grouping {
        if self.offsets.is_empty() {
            self.offsets.push(0);
        }
        Grouping {
            direction,
            offsets: Arc::new(self.offsets),
            sources: self.sources,
            entry_node: self.entry_node,
            entry_edge: self.entry_edge,
            group_row: self.group_row,
            group_edge,
            num_sources,
            structure,
        }
    }
}
