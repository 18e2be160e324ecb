//! The `.hg` text format.
//!
//! ```text
//! # comment lines start with '#'
//! n m
//! 0 1 2
//! 1 3 w=0.5
//! ```
//!
//! The header gives the node and edge counts; each following line lists the
//! 0-based node ids of one hyperedge, optionally ending with a `w=<float>`
//! weight. Blank lines are ignored.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::Hypergraph;

pub fn parse_hg(text: &str, origin: &str) -> Result<Hypergraph> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (hline, header) = lines
        .next()
        .ok_or_else(|| err(1, "missing header line \"n m\"".into()))?;
    let counts: Vec<&str> = header.split_whitespace().collect();
    if counts.len() != 2 {
        return Err(err(hline, format!("expected \"n m\", found {header:?}")));
    }
    let parse_count = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| err(hline, format!("invalid count {s:?}")))
    };
    let n = parse_count(counts[0])?;
    let m = parse_count(counts[1])?;

    let mut edges = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    let mut any_weight = false;
    for (lineno, line) in lines {
        if edges.len() == m {
            return Err(err(lineno, format!("more than {m} hyperedge lines")));
        }
        let mut members = Vec::new();
        let mut weight = None;
        for token in line.split_whitespace() {
            if weight.is_some() {
                return Err(err(lineno, "tokens after the weight".into()));
            }
            if let Some(w) = token.strip_prefix("w=") {
                let w: f64 = w
                    .parse()
                    .map_err(|_| err(lineno, format!("invalid weight {token:?}")))?;
                weight = Some(w);
                any_weight = true;
            } else {
                let id: usize = token
                    .parse()
                    .map_err(|_| err(lineno, format!("invalid node id {token:?}")))?;
                if id >= n {
                    return Err(err(lineno, format!("node id {id} >= n = {n}")));
                }
                members.push(id);
            }
        }
        if members.is_empty() {
            return Err(err(lineno, "hyperedge without nodes".into()));
        }
        edges.push(members);
        weights.push(weight.unwrap_or(1.0));
    }
    if edges.len() != m {
        return Err(err(
            text.lines().count().max(1),
            format!("expected {m} hyperedges, found {}", edges.len()),
        ));
    }
    Hypergraph::from_edge_list(n, &edges, any_weight.then_some(weights))
}

pub fn serialize_hg(hg: &Hypergraph) -> String {
    let mut out = format!("{} {}\n", hg.num_nodes(), hg.num_edges());
    for (e, members) in hg.edges().iter().enumerate() {
        let ids: Vec<String> = members.iter().map(usize::to_string).collect();
        out.push_str(&ids.join(" "));
        if let Some(w) = hg.weights() {
            let _ = write!(out, " w={}", w[e]);
        }
        out.push('\n');
    }
    out
}

pub fn read_hg(path: &Path) -> Result<Hypergraph> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_hg(&text, &path.display().to_string())
}

pub fn write_hg(hg: &Hypergraph, path: &Path) -> Result<()> {
    std::fs::write(path, serialize_hg(hg)).map_err(|e| Error::io(path, e))
}
