use serde::{Deserialize, Serialize};

use super::Hypergraph;

/// min / max / mean / median of a list of counts.
///
/// The median is the lower-middle element for even counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub min: usize,
    pub max: usize,
    pub avg: f64,
    pub median: usize,
    pub total: usize,
}

impl SizeSummary {
    /// `None` for an empty list.
    pub fn of(values: &[usize]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let total: usize = sorted.iter().sum();
        Some(Self {
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            avg: total as f64 / sorted.len() as f64,
            median: sorted[(sorted.len() - 1) / 2],
            total,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypergraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    /// `None` when there are no hyperedges.
    pub edge_size: Option<SizeSummary>,
    /// `None` when there are no nodes.
    pub degree: Option<SizeSummary>,
}

impl HypergraphStats {
    /// Human-readable table, one statistic per line.
    pub fn to_table(&self) -> String {
        fn fmt(s: &Option<SizeSummary>, f: impl Fn(&SizeSummary) -> String) -> String {
            s.as_ref().map_or_else(|| "undefined".to_string(), f)
        }
        let e = &self.edge_size;
        let d = &self.degree;
        [
            format!("|V|        {}", self.num_nodes),
            format!("|E|        {}", self.num_edges),
            format!("max |e|    {}", fmt(e, |s| s.max.to_string())),
            format!("min |e|    {}", fmt(e, |s| s.min.to_string())),
            format!("avg |e|    {}", fmt(e, |s| format!("{:.2}", s.avg))),
            format!("med |e|    {}", fmt(e, |s| s.median.to_string())),
            format!("max d_v    {}", fmt(d, |s| s.max.to_string())),
            format!("min d_v    {}", fmt(d, |s| s.min.to_string())),
            format!("avg d_v    {}", fmt(d, |s| format!("{:.2}", s.avg))),
            format!("med d_v    {}", fmt(d, |s| s.median.to_string())),
        ]
        .join("\n")
    }
}

pub fn stats(hg: &Hypergraph) -> HypergraphStats {
    HypergraphStats {
        num_nodes: hg.num_nodes(),
        num_edges: hg.num_edges(),
        edge_size: SizeSummary::of(&hg.edge_sizes()),
        degree: SizeSummary::of(&hg.degrees()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn path_stats() {
        let hg = Hypergraph::from_edge_list(3, &[vec![0, 1], vec![1, 2]], None).unwrap();
        let s = stats(&hg);
        let e = s.edge_size.unwrap();
        assert_eq!(e.avg, 2.0);
        assert_eq!(s.degree.unwrap().max, 2);
        // degrees [1,2,1] sorted [1,1,2]: median 1
        assert_eq!(s.degree.unwrap().median, 1);
    }

    #[test]
    fn empty_hypergraph_is_undefined() {
        let hg = Hypergraph::from_edge_list::<Vec<usize>>(0, &[], None).unwrap();
        let s = stats(&hg);
        assert_eq!((s.num_nodes, s.num_edges), (0, 0));
        assert!(s.edge_size.is_none() && s.degree.is_none());
        assert!(s.to_table().contains("undefined"));
    }

    #[test]
    fn even_count_median_is_lower_middle() {
        assert_eq!(SizeSummary::of(&[4, 1, 3, 2]).unwrap().median, 2);
    }

    proptest! {
        #[test]
        fn degree_total_equals_size_total(hg in crate::hypergraph::tests::arb_hypergraph()) {
            let s = stats(&hg);
            let sizes = s.edge_size.map_or(0, |x| x.total);
            let degs = s.degree.map_or(0, |x| x.total);
            prop_assert_eq!(sizes, degs);
        }
    }
}
