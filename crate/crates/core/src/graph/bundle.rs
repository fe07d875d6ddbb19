use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::GraphError;
use crate::tensor::{CsrMatrix, DenseMatrix};

/// `meta.json` of a bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleMeta {
    pub name: String,
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    /// Edge lines in the upstream source, before symmetrization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_edge_lines: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unique_undirected_edges: Option<usize>,
}

impl BundleMeta {
    pub fn read(dir: &Path) -> Result<Self, GraphError> {
        let file = dir.join("meta.json");
        let text = read(&file)?;
        serde_json::from_str(&text).map_err(|e| GraphError::Line {
            file,
            line: e.line(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Edge bookkeeping reported by the loader; not part of bundle equality.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeStats {
    /// Non-empty lines in `edges.tsv`.
    pub edge_lines: usize,
    /// Distinct undirected edges after symmetrization and deduplication.
    pub unique_undirected_edges: usize,
    /// Upstream raw edge count, when `meta.json` records it.
    pub raw_edge_lines: Option<usize>,
}

/// Immutable, validated node-classification dataset.
#[derive(Debug, Clone)]
pub struct GraphBundle {
    pub name: String,
    pub num_classes: usize,
    /// Symmetric, zero diagonal, positive weights.
    pub adjacency: CsrMatrix,
    pub features: DenseMatrix,
    pub labels: Vec<Option<usize>>,
    pub splits: Splits,
    pub edge_stats: EdgeStats,
}

impl PartialEq for GraphBundle {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.num_classes == other.num_classes
            && self.adjacency == other.adjacency
            && self.features == other.features
            && self.labels == other.labels
            && self.splits == other.splits
    }
}

impl GraphBundle {
    pub fn num_nodes(&self) -> usize {
        self.adjacency.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Labels of `nodes`; `None` if any of them is unlabeled.
    pub fn labels_of(&self, nodes: &[usize]) -> Option<Vec<usize>> {
        nodes.iter().map(|&n| self.labels.get(n).copied().flatten()).collect()
    }

    pub fn meta(&self) -> BundleMeta {
        BundleMeta {
            name: self.name.clone(),
            num_nodes: self.num_nodes(),
            num_features: self.num_features(),
            num_classes: self.num_classes,
            raw_edge_lines: self.edge_stats.raw_edge_lines,
            unique_undirected_edges: Some(self.edge_stats.unique_undirected_edges),
        }
    }

    /// Checks every bundle invariant. `load_bundle` output always passes.
    pub fn validate(&self) -> Result<(), GraphError> {
        let here = PathBuf::from("<in-memory>");
        let n = self.num_nodes();
        let invalid = |message: String| GraphError::File {
            file: here.clone(),
            message,
        };
        if self.adjacency.cols() != n {
            return Err(GraphError::NotSquare(self.adjacency.shape()));
        }
        if self.features.nrows() != n || self.labels.len() != n {
            return Err(invalid(format!(
                "features have {} rows and labels {} entries for {n} nodes",
                self.features.nrows(),
                self.labels.len()
            )));
        }
        for (i, j, w) in self.adjacency.triplets() {
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if w < 0.0 {
                return Err(GraphError::NegativeWeight {
                    row: i,
                    col: j,
                    weight: w,
                });
            }
            if self.adjacency.get(j, i) != w {
                return Err(GraphError::Asymmetric { row: i, col: j });
            }
        }
        if let Some(&bad) = self.labels.iter().flatten().find(|&&c| c >= self.num_classes) {
            return Err(invalid(format!("label {bad} >= num_classes {}", self.num_classes)));
        }
        check_splits(&self.splits, &self.labels, &here)
    }
}

/// Loads and validates a bundle directory.
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<GraphBundle, GraphError> {
    let dir = dir.as_ref();
    let meta = BundleMeta::read(dir)?;
    let n = meta.num_nodes;

    let (adjacency, edge_lines, unique) = read_edges(&dir.join("edges.tsv"), n)?;
    let features = read_features(&dir.join("features.tsv"), n, meta.num_features)?;
    let labels = read_labels(&dir.join("labels.tsv"), n, meta.num_classes)?;

    let splits_file = dir.join("splits.json");
    let splits: Splits =
        serde_json::from_str(&read(&splits_file)?).map_err(|e| GraphError::Line {
            file: splits_file.clone(),
            line: e.line(),
            message: e.to_string(),
        })?;
    check_splits(&splits, &labels, &splits_file)?;

    Ok(GraphBundle {
        name: meta.name,
        num_classes: meta.num_classes,
        adjacency,
        features,
        labels,
        splits,
        edge_stats: EdgeStats {
            edge_lines,
            unique_undirected_edges: unique,
            raw_edge_lines: meta.raw_edge_lines,
        },
    })
}

/// Writes `bundle` in the directory layout `load_bundle` reads. Each
/// undirected edge is written once, smaller id first.
pub fn write_bundle(bundle: &GraphBundle, dir: impl AsRef<Path>) -> Result<(), GraphError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| GraphError::Io {
        file: dir.to_path_buf(),
        source,
    })?;

    let meta = serde_json::to_string_pretty(&bundle.meta()).expect("meta serializes");
    write(&dir.join("meta.json"), meta + "\n")?;

    let mut edges = String::new();
    for (i, j, w) in bundle.adjacency.triplets().filter(|&(i, j, _)| i < j) {
        if w == 1.0 {
            edges.push_str(&format!("{i}\t{j}\n"));
        } else {
            edges.push_str(&format!("{i}\t{j}\t{w}\n"));
        }
    }
    write(&dir.join("edges.tsv"), edges)?;

    let mut feats = String::new();
    for (i, row) in bundle.features.rows().into_iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                feats.push_str(&format!("{i}\t{j}\t{v}\n"));
            }
        }
    }
    write(&dir.join("features.tsv"), feats)?;

    let mut labels = String::new();
    for (i, l) in bundle.labels.iter().enumerate() {
        if let Some(c) = l {
            labels.push_str(&format!("{i}\t{c}\n"));
        }
    }
    write(&dir.join("labels.tsv"), labels)?;

    let splits = serde_json::to_string(&bundle.splits).expect("splits serialize");
    write(&dir.join("splits.json"), splits + "\n")
}

fn read(file: &Path) -> Result<String, GraphError> {
    fs::read_to_string(file).map_err(|source| GraphError::Io {
        file: file.to_path_buf(),
        source,
    })
}

fn write(file: &Path, contents: String) -> Result<(), GraphError> {
    fs::write(file, contents).map_err(|source| GraphError::Io {
        file: file.to_path_buf(),
        source,
    })
}

/// Non-empty lines split on tabs, with 1-based line numbers.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').split('\t').collect()))
}

fn line_err(file: &Path, line: usize, message: impl Into<String>) -> GraphError {
    GraphError::Line {
        file: file.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_id(file: &Path, line: usize, field: &str, raw: &str, bound: usize) -> Result<usize, GraphError> {
    let id: usize = raw
        .trim()
        .parse()
        .map_err(|_| line_err(file, line, format!("{field} {raw:?} is not a non-negative integer")))?;
    if id >= bound {
        return Err(line_err(file, line, format!("{field} {id} out of range (< {bound})")));
    }
    Ok(id)
}

fn parse_value(file: &Path, line: usize, raw: &str) -> Result<f64, GraphError> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| line_err(file, line, format!("value {raw:?} is not a number")))?;
    if !v.is_finite() {
        return Err(line_err(file, line, format!("value {raw:?} is not finite")));
    }
    Ok(v)
}

fn read_edges(file: &Path, n: usize) -> Result<(CsrMatrix, usize, usize), GraphError> {
    let text = read(file)?;
    let mut edges: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    let mut lines = 0;
    for (line, fields) in records(&text) {
        lines += 1;
        if !(2..=3).contains(&fields.len()) {
            return Err(line_err(file, line, "expected src<TAB>dst[<TAB>weight]"));
        }
        let src = parse_id(file, line, "src", fields[0], n)?;
        let dst = parse_id(file, line, "dst", fields[1], n)?;
        if src == dst {
            return Err(line_err(file, line, format!("self-loop on node {src}")));
        }
        let weight = match fields.get(2) {
            Some(raw) => parse_value(file, line, raw)?,
            None => 1.0,
        };
        if weight <= 0.0 {
            return Err(line_err(file, line, format!("edge weight {weight} must be positive")));
        }
        match edges.entry((src.min(dst), src.max(dst))) {
            Entry::Vacant(e) => {
                e.insert((weight, line));
            }
            Entry::Occupied(e) => {
                let (prev, prev_line) = *e.get();
                if prev != weight {
                    return Err(line_err(
                        file,
                        line,
                        format!(
                            "edge {src}-{dst} has weight {weight} but line {prev_line} gave {prev}"
                        ),
                    ));
                }
            }
        }
    }
    let unique = edges.len();
    let triplets = edges
        .into_iter()
        .flat_map(|((a, b), (w, _))| [(a, b, w), (b, a, w)]);
    let adjacency = CsrMatrix::from_triplets(n, n, triplets).expect("ids validated");
    Ok((adjacency, lines, unique))
}

fn read_features(file: &Path, n: usize, d: usize) -> Result<DenseMatrix, GraphError> {
    let text = read(file)?;
    let mut x = DenseMatrix::zeros((n, d));
    let mut seen = std::collections::HashSet::new();
    for (line, fields) in records(&text) {
        if fields.len() != 3 {
            return Err(line_err(file, line, "expected node<TAB>feature_index<TAB>value"));
        }
        let node = parse_id(file, line, "node", fields[0], n)?;
        let feat = parse_id(file, line, "feature_index", fields[1], d)?;
        let value = parse_value(file, line, fields[2])?;
        if !seen.insert((node, feat)) {
            return Err(line_err(file, line, format!("duplicate entry for ({node}, {feat})")));
        }
        x[[node, feat]] = value;
    }
    Ok(x)
}

fn read_labels(file: &Path, n: usize, k: usize) -> Result<Vec<Option<usize>>, GraphError> {
    let text = read(file)?;
    let mut labels = vec![None; n];
    for (line, fields) in records(&text) {
        if fields.len() != 2 {
            return Err(line_err(file, line, "expected node<TAB>class"));
        }
        let node = parse_id(file, line, "node", fields[0], n)?;
        let class = parse_id(file, line, "class", fields[1], k)?;
        if labels[node].replace(class).is_some() {
            return Err(line_err(file, line, format!("node {node} labeled twice")));
        }
    }
    Ok(labels)
}

fn check_splits(splits: &Splits, labels: &[Option<usize>], file: &Path) -> Result<(), GraphError> {
    let n = labels.len();
    let mut owner: Vec<Option<&str>> = vec![None; n];
    for (name, ids) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        for &id in ids {
            let err = |message: String| GraphError::File {
                file: file.to_path_buf(),
                message,
            };
            if id >= n {
                return Err(err(format!("{name} id {id} out of range (< {n})")));
            }
            if let Some(prev) = owner[id] {
                return Err(err(format!("node {id} appears in both {prev} and {name}")));
            }
            owner[id] = Some(name);
            if labels[id].is_none() {
                return Err(err(format!("{name} node {id} has no label")));
            }
        }
    }
    Ok(())
}
