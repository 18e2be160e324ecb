//! Node-classification datasets on disk.
//!
//! A bundle directory holds
//!
//! ```text
//! <dir>/meta.json              name, class count, feature width, notes
//! <dir>/<name>.hg              the hypergraph
//! <dir>/<name>.features.csv    one row per node, ',' separated, no header
//! <dir>/<name>.labels          one class id per line
//! ```
//!
//! The features file is optional; models then fall back to synthetic
//! features. Converters from the raw UCI Zoo and LINQS Cora files are in
//! [`convert`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypergraph::{read_hg, write_hg, Hypergraph};
use crate::matrix::DenseMatrix;

pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_dim: Option<usize>,
    /// Every transformation applied to the raw source files.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Where the parts of a dataset live.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetPaths {
    pub hypergraph: PathBuf,
    #[serde(default)]
    pub features: Option<PathBuf>,
    pub labels: PathBuf,
    /// `meta.json`; without it the name comes from the hypergraph file and
    /// the class count from the largest label.
    #[serde(default)]
    pub meta: Option<PathBuf>,
    #[serde(default)]
    pub features_header: bool,
}

impl DatasetPaths {
    /// Paths of a bundle directory, using the name recorded in its
    /// `meta.json`. A missing features file is allowed.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta = read_meta(&meta_path)?;
        let features = dir.join(format!("{}.features.csv", meta.name));
        Ok(Self {
            hypergraph: dir.join(format!("{}.hg", meta.name)),
            features: features.exists().then_some(features),
            labels: dir.join(format!("{}.labels", meta.name)),
            meta: Some(meta_path),
            features_header: false,
        })
    }
}

/// A validated dataset: every row count equals the node count and every
/// label lies in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub hypergraph: Hypergraph,
    pub features: Option<DenseMatrix>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub notes: Vec<String>,
}

impl DatasetBundle {
    pub fn num_nodes(&self) -> usize {
        self.hypergraph.num_nodes()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(DenseMatrix::cols)
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            name: self.name.clone(),
            num_classes: self.num_classes,
            feature_dim: self.feature_dim(),
            notes: self.notes.clone(),
        }
    }

    /// Writes the bundle layout described in the module docs.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_hg(&self.hypergraph, &dir.join(format!("{}.hg", self.name)))?;
        if let Some(f) = &self.features {
            write_features_csv(f, &dir.join(format!("{}.features.csv", self.name)))?;
        }
        write_labels(&self.labels, &dir.join(format!("{}.labels", self.name)))?;
        let meta = serde_json::to_string_pretty(&self.meta())?;
        let path = dir.join(META_FILE);
        fs::write(&path, meta + "\n").map_err(|e| Error::io(path, e))
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn read_meta(path: &Path) -> Result<DatasetMeta> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn load_dataset(paths: &DatasetPaths) -> Result<DatasetBundle> {
    let meta = paths.meta.as_deref().map(read_meta).transpose()?;
    let hypergraph = read_hg(&paths.hypergraph)?;
    let n = hypergraph.num_nodes();
    let labels_text = read_text(&paths.labels)?;
    let labels = parse_labels(&labels_text, &paths.labels.display().to_string(), meta.as_ref().map(|m| m.num_classes))?;
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} has {} labels for {n} nodes",
            paths.labels.display(),
            labels.len()
        )));
    }
    let features = match &paths.features {
        Some(p) => {
            let f = read_features_csv(p, paths.features_header)?;
            if f.rows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} has {} rows for {n} nodes",
                    p.display(),
                    f.rows()
                )));
            }
            if let Some(dim) = meta.as_ref().and_then(|m| m.feature_dim) {
                if f.cols() != dim {
                    return Err(Error::DimensionMismatch(format!(
                        "{} has {} columns, metadata says {dim}",
                        p.display(),
                        f.cols()
                    )));
                }
            }
            Some(f)
        }
        None => None,
    };
    let (name, num_classes, notes) = match meta {
        Some(m) => (m.name, m.num_classes, m.notes),
        None => {
            let name = paths
                .hypergraph
                .file_stem()
                .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
            (name, labels.iter().max().map_or(0, |&m| m + 1), Vec::new())
        }
    };
    Ok(DatasetBundle {
        name,
        hypergraph,
        features,
        labels,
        num_classes,
        notes,
    })
}

pub fn load_dataset_dir(dir: &Path) -> Result<DatasetBundle> {
    load_dataset(&DatasetPaths::from_dir(dir)?)
}

/// One non-negative integer per line; blank lines and `#` comments are
/// skipped. With `classes` given, labels must lie in `[0, classes)`.
pub fn parse_labels(text: &str, origin: &str, classes: Option<usize>) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let label: usize = line.parse().map_err(|_| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            message: format!("expected a non-negative integer label, found {line:?}"),
        })?;
        if let Some(c) = classes {
            if label >= c {
                return Err(Error::LabelOutOfRange {
                    path: origin.to_string(),
                    line: i + 1,
                    label,
                    classes: c,
                });
            }
        }
        out.push(label);
    }
    Ok(out)
}

pub fn write_labels(labels: &[usize], path: &Path) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 2);
    for l in labels {
        let _ = writeln!(s, "{l}");
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Parses a ',' separated matrix of `.`-decimal numbers.
pub fn parse_features_csv(text: &str, origin: &str, header: bool) -> Result<DenseMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_err(line, format!("expected {c} fields, found {}", record.len())));
            }
            Some(_) => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("not a number: {field:?}")))?;
            data.push(v);
        }
        rows += 1;
    }
    DenseMatrix::new(rows, cols.unwrap_or(0), data)
}

pub fn read_features_csv(path: &Path, header: bool) -> Result<DenseMatrix> {
    parse_features_csv(&read_text(path)?, &path.display().to_string(), header)
}

/// Shortest round-tripping decimal form of every entry, so reading the file
/// back is bit-exact.
pub fn features_to_csv(m: &DenseMatrix) -> String {
    let mut s = String::new();
    for row in m.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v:?}");
        }
        s.push('\n');
    }
    s
}

pub fn write_features_csv(m: &DenseMatrix, path: &Path) -> Result<()> {
    fs::write(path, features_to_csv(m)).map_err(|e| Error::io(path, e))
}

/// Divides every row by its sum of absolute values; all-zero rows stay zero.
pub fn row_normalize(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let s: f64 = row.iter().map(|v| v.abs()).sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

/// Converters from raw public dataset files.
pub mod convert {
    use super::*;

    /// The UCI Zoo table (`zoo.data`): `name, 16 attributes, type`.
    ///
    /// Nodes are the rows in file order. Features are the 16 attribute
    /// columns as given, labels are `type − 1`, and every (column, value)
    /// pair over the attributes and the type column becomes one hyperedge,
    /// ordered by column and then by ascending value.
    pub fn zoo_from_uci(text: &str, origin: &str) -> Result<DatasetBundle> {
        const FIELDS: usize = 18;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let parse_err = |line: usize, message: String| Error::Parse {
            path: origin.to_string(),
            line,
            message,
        };
        let mut columns: Vec<Vec<i64>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            if record.iter().all(str::is_empty) {
                continue;
            }
            if record.len() != FIELDS {
                return Err(parse_err(line, format!("expected {FIELDS} fields, found {}", record.len())));
            }
            let values = record
                .iter()
                .skip(1)
                .map(|f| f.parse::<i64>().map_err(|_| parse_err(line, format!("not an integer: {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if !(1..=7).contains(&values[16]) {
                return Err(parse_err(line, format!("animal type {} outside 1..=7", values[16])));
            }
            columns.push(values);
        }
        let n = columns.len();
        let features = DenseMatrix::new(
            n,
            16,
            columns.iter().flat_map(|r| r[..16].iter().map(|&v| v as f64)).collect(),
        )?;
        let labels: Vec<usize> = columns.iter().map(|r| (r[16] - 1) as usize).collect();
        let mut edges = Vec::new();
        for c in 0..17 {
            let mut by_value: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
            for (v, row) in columns.iter().enumerate() {
                by_value.entry(row[c]).or_default().push(v);
            }
            edges.extend(by_value.into_values());
        }
        let hypergraph = Hypergraph::from_edge_list(n, &edges, None)?;
        Ok(DatasetBundle {
            name: "zoo".into(),
            hypergraph,
            features: Some(features),
            labels,
            num_classes: 7,
            notes: vec![
                "source: UCI Zoo zoo.data; nodes are rows in file order".into(),
                "features: the 16 attribute columns as given, no scaling".into(),
                "labels: animal type minus 1".into(),
                "hyperedges: one per (column, value) over the 16 attributes and the type column, ordered by column then value".into(),
            ],
        })
    }

    pub fn read_zoo_uci(path: &Path) -> Result<DatasetBundle> {
        zoo_from_uci(&read_text(path)?, &path.display().to_string())
    }

    /// LINQS Cora (`cora.content`, `cora.cites`) as a co-citation
    /// hypergraph.
    ///
    /// Nodes are papers in `cora.content` order with their binary word
    /// vectors as features; classes are numbered in sorted name order. Each
    /// citing paper contributes one hyperedge holding the distinct papers it
    /// cites, kept when it has at least two members. Citations naming
    /// unknown papers are dropped.
    pub fn cora_from_linqs(content: &str, cites: &str, content_origin: &str, cites_origin: &str) -> Result<DatasetBundle> {
        let parse_err = |path: &str, line: usize, message: String| Error::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
        let mut class_names: Vec<&str> = Vec::new();
        let mut data = Vec::new();
        let mut width = None;
        for (i, line) in content.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() < 3 {
                return Err(parse_err(content_origin, i + 1, "expected id, word flags and class".into()));
            }
            let words = &fields[1..fields.len() - 1];
            match width {
                None => width = Some(words.len()),
                Some(w) if w != words.len() => {
                    return Err(parse_err(content_origin, i + 1, format!("expected {w} word flags, found {}", words.len())));
                }
                Some(_) => {}
            }
            for w in words {
                let v: f64 = w
                    .parse()
                    .map_err(|_| parse_err(content_origin, i + 1, format!("not a number: {w:?}")))?;
                data.push(v);
            }
            if ids.insert(fields[0], ids.len()).is_some() {
                return Err(parse_err(content_origin, i + 1, format!("duplicate paper id {}", fields[0])));
            }
            class_names.push(fields[fields.len() - 1]);
        }
        let n = ids.len();
        let features = DenseMatrix::new(n, width.unwrap_or(0), data)?;
        let mut classes: Vec<&str> = class_names.clone();
        classes.sort_unstable();
        classes.dedup();
        let labels: Vec<usize> = class_names
            .iter()
            .map(|c| classes.binary_search(c).expect("class collected above"))
            .collect();

        let mut cited_by: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let mut dropped = 0usize;
        for (i, line) in cites.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if fields.len() != 2 {
                return Err(parse_err(cites_origin, i + 1, "expected \"cited citing\"".into()));
            }
            match (ids.get(fields[0]), ids.get(fields[1])) {
                (Some(&cited), Some(&citing)) => cited_by.entry(citing).or_default().push(cited),
                _ => dropped += 1,
            }
        }
        let mut edges = Vec::new();
        for (_, mut members) in cited_by {
            members.sort_unstable();
            members.dedup();
            if members.len() >= 2 {
                edges.push(members);
            }
        }
        let hypergraph = Hypergraph::from_edge_list(n, &edges, None)?;
        Ok(DatasetBundle {
            name: "cora".into(),
            hypergraph,
            features: Some(features),
            labels,
            num_classes: classes.len(),
            notes: vec![
                "source: LINQS cora.content and cora.cites; nodes are papers in cora.content order".into(),
                "features: binary word flags as given".into(),
                format!("labels: class names in sorted order: {}", classes.join(", ")),
                "hyperedges: distinct papers cited by one paper, kept when at least 2".into(),
                format!("citations with unknown paper ids dropped: {dropped}"),
            ],
        })
    }

    pub fn read_cora_linqs(dir: &Path) -> Result<DatasetBundle> {
        let content = dir.join("cora.content");
        let cites = dir.join("cora.cites");
        cora_from_linqs(
            &read_text(&content)?,
            &read_text(&cites)?,
            &content.display().to_string(),
            &cites.display().to_string(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_are_range_checked_with_line_numbers() {
        let text = "0\n# comment\n2\n\n3\n";
        assert_eq!(parse_labels(text, "l", None).unwrap(), vec![0, 2, 3]);
        match parse_labels(text, "l", Some(3)).unwrap_err() {
            Error::LabelOutOfRange { line, label, classes, .. } => assert_eq!((line, label, classes), (5, 3, 3)),
            e => panic!("{e}"),
        }
        let e = parse_labels("1\n-1\n", "l", None).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn features_round_trip_bit_exactly() {
        let m = DenseMatrix::from_rows(&[[0.1, -1e-300, 3.0], [f64::MIN_POSITIVE, 1.0 / 3.0, -0.0]]).unwrap();
        let back = parse_features_csv(&features_to_csv(&m), "f", false).unwrap();
        assert_eq!(
            back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            m.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let with_header = parse_features_csv("a,b\n1,2\n", "f", true).unwrap();
        assert_eq!(with_header.shape(), (1, 2));
    }

    #[test]
    fn ragged_or_non_numeric_csv_names_the_line() {
        let e = parse_features_csv("1,2\n3,4\n5\n", "f", false).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse_features_csv("1,2\n3,x\n", "f", false).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
    }

    #[test]
    fn row_normalization_keeps_zero_rows() {
        let m = DenseMatrix::from_rows(&[[1.0, -3.0], [0.0, 0.0]]).unwrap();
        let r = row_normalize(&m);
        assert_eq!(r.row(0), &[0.25, -0.75]);
        assert_eq!(r.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn zoo_converter_builds_value_hyperedges() {
        let text = "a,1,0,0,1,0,0,1,1,1,1,0,0,4,0,0,1,1\n\
                    b,0,0,1,0,0,1,1,1,1,0,0,1,0,1,0,0,4\n\
                    c,1,0,0,1,0,0,1,1,1,1,0,0,4,0,0,1,1\n";
        let b = convert::zoo_from_uci(text, "zoo").unwrap();
        assert_eq!(b.num_nodes(), 3);
        assert_eq!(b.feature_dim(), Some(16));
        assert_eq!(b.labels, vec![0, 3, 0]);
        // Columns where all three agree give one edge, the rest two.
        let differing = (1..18).filter(|&c| {
            let row = |i: usize| text.lines().nth(i).unwrap().split(',').nth(c).unwrap().to_string();
            row(0) != row(1)
        });
        assert_eq!(b.hypergraph.num_edges(), 17 + differing.count());
        assert!(b.hypergraph.edges().contains(&vec![0, 2]));
        let e = convert::zoo_from_uci("a,1,2\n", "zoo").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn cora_converter_groups_citations() {
        let content = "p1\t1\t0\tA\np2\t0\t1\tB\np3\t1\t1\tA\np4\t0\t0\tC\n";
        let cites = "p1\tp4\np2\tp4\np2\tp4\np3\tp1\np1\tp2\npX\tp2\n";
        let b = convert::cora_from_linqs(content, cites, "c", "k").unwrap();
        assert_eq!(b.labels, vec![0, 1, 0, 2]);
        assert_eq!(b.num_classes, 3);
        // p4 cites {p1, p2}; p1 cites only p3, p2 cites nothing known.
        assert_eq!(b.hypergraph.edges(), &[vec![0, 1]]);
        assert_eq!(b.feature_dim(), Some(2));
        assert!(b.notes.iter().any(|n| n.ends_with("dropped: 1")));
    }

    #[test]
    fn bundle_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let hg = Hypergraph::from_edge_list(3, &[vec![0, 1], vec![1, 2]], Some(vec![1.0, 0.5])).unwrap();
        let bundle = DatasetBundle {
            name: "toy".into(),
            hypergraph: hg,
            features: Some(DenseMatrix::from_rows(&[[0.5], [1.5], [-2.0]]).unwrap()),
            labels: vec![0, 1, 1],
            num_classes: 2,
            notes: vec!["made up".into()],
        };
        bundle.write_dir(dir.path()).unwrap();
        assert_eq!(load_dataset_dir(dir.path()).unwrap(), bundle);

        std::fs::write(dir.path().join("toy.labels"), "0\n1\n").unwrap();
        assert_eq!(load_dataset_dir(dir.path()).unwrap_err().kind(), "DimensionMismatch");
        std::fs::write(dir.path().join("toy.labels"), "0\n1\n2\n").unwrap();
        assert_eq!(load_dataset_dir(dir.path()).unwrap_err().kind(), "LabelOutOfRange");
        std::fs::remove_file(dir.path().join("toy.hg")).unwrap();
        assert_eq!(load_dataset_dir(dir.path()).unwrap_err().kind(), "ParseError");
    }
}
