//! Text form of the star expansion.
//!
//! Line 1 is `n m`; every following line is one incidence `v e`, optionally
//! followed by `w=<float>` carrying the weight of hyperedge `e`. Lines
//! starting with `#` are comments.

use std::fmt::Write as _;

use hgx_core::hypergraph::{from_star, star_expansion};
use hgx_core::{Error, Hypergraph, Result};

pub fn to_star_text(hg: &Hypergraph) -> String {
    let mut out = format!("{} {}\n", hg.num_nodes(), hg.num_edges());
    let weighted = hg.weights().is_some();
    for (v, e) in star_expansion(hg) {
        if weighted {
            let _ = writeln!(out, "{v} {e} w={}", hg.weight(e));
        } else {
            let _ = writeln!(out, "{v} {e}");
        }
    }
    out
}

pub fn parse_star_text(text: &str, origin: &str) -> Result<Hypergraph> {
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
    let (hline, header) = lines.next().ok_or_else(|| err(1, "missing `n m` header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(hline, format!("bad header: {e}")))?;
    let [n, m] = dims[..] else {
        return Err(err(hline, format!("expected `n m`, found {header:?}")));
    };

    let mut pairs = Vec::new();
    let mut weights: Vec<Option<f64>> = vec![None; m];
    for (line, text) in lines {
        let mut tokens = text.split_whitespace();
        let mut index = |name: &str| -> Result<usize> {
            let tok = tokens.next().ok_or_else(|| err(line, format!("missing {name}")))?;
            tok.parse().map_err(|_| err(line, format!("bad {name} {tok:?}")))
        };
        let v = index("node id")?;
        let e = index("edge id")?;
        if e >= m {
            return Err(err(line, format!("edge id {e} but header declares {m} edges")));
        }
        if let Some(tok) = tokens.next() {
            let w: f64 = tok
                .strip_prefix("w=")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(line, format!("expected w=<float>, found {tok:?}")))?;
            match weights[e] {
                Some(prev) if prev != w => {
                    return Err(err(line, format!("edge {e} has weights {prev} and {w}")));
                }
                _ => weights[e] = Some(w),
            }
        }
        if tokens.next().is_some() {
            return Err(err(line, "trailing tokens".into()));
        }
        pairs.push((v, e));
    }

    let hg = from_star(n, m, &pairs)?;
    if weights.iter().all(Option::is_none) {
        return Ok(hg);
    }
    let w = weights.into_iter().map(|w| w.unwrap_or(1.0)).collect();
    Hypergraph::from_edge_list(n, hg.edges(), Some(w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_round_trip() {
        let hg = Hypergraph::from_edge_list(5, &[vec![0, 1, 2], vec![2, 4]], Some(vec![1.5, 2.0])).unwrap();
        let back = parse_star_text(&to_star_text(&hg), "mem").unwrap();
        assert_eq!(back, hg);
    }

    #[test]
    fn unweighted_text_shape() {
        let hg = Hypergraph::from_edge_list(3, &[vec![0, 2]], None).unwrap();
        assert_eq!(to_star_text(&hg), "3 1\n0 0\n2 0\n");
    }

    #[test]
    fn conflicting_weights_name_the_line() {
        let e = parse_star_text("2 1\n0 0 w=1\n1 0 w=2\n", "s").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn out_of_range_edge_is_rejected() {
        assert!(parse_star_text("2 1\n0 1\n", "s").is_err());
    }
}
