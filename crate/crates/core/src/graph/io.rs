//! TSV ingestion and export.
//!
//! `nodes.tsv`: header `node_id<TAB>node_type[<TAB>f0<TAB>f1...]`.
//! `edges.tsv`: header `src<TAB>edge_type<TAB>dst`.
//! `labels.tsv`: header `node_id<TAB>label`.
//!
//! Type vocabularies are assigned in order of first appearance.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::HeteroGraph;
use crate::error::{Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn vocab_id(vocab: &mut Vec<String>, name: &str) -> usize {
    match vocab.iter().position(|v| v == name) {
        Some(i) => i,
        None => {
            vocab.push(name.to_owned());
            vocab.len() - 1
        }
    }
}

/// Data lines as `(line_number, fields)`, skipping the header and blank lines.
fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r').split('\t').collect()))
}

fn header(path: &Path, text: &str) -> Result<Vec<String>> {
    let first = text.lines().next().ok_or_else(|| parse_err(path, 1, "missing header"))?;
    Ok(first.trim_end_matches('\r').split('\t').map(str::to_owned).collect())
}

fn parse_id(path: &Path, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("{what} {field:?} is not a non-negative integer")))
}

pub fn load_graph(nodes_path: impl AsRef<Path>, edges_path: impl AsRef<Path>) -> Result<HeteroGraph> {
    let nodes_path = nodes_path.as_ref();
    let edges_path = edges_path.as_ref();

    let text = read(nodes_path)?;
    let head = header(nodes_path, &text)?;
    if head.len() < 2 || head[0] != "node_id" || head[1] != "node_type" {
        return Err(parse_err(nodes_path, 1, "header must start with node_id<TAB>node_type"));
    }
    let feature_dim = head.len() - 2;
    let mut type_names = Vec::new();
    let mut entries: Vec<(usize, usize, Vec<f64>, usize)> = Vec::new();
    for (line, fields) in rows(&text) {
        if fields.len() != head.len() {
            return Err(parse_err(
                nodes_path,
                line,
                format!("expected {} columns, found {}", head.len(), fields.len()),
            ));
        }
        let id = parse_id(nodes_path, line, fields[0], "node_id")?;
        let ty = vocab_id(&mut type_names, fields[1].trim());
        let feats = fields[2..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(nodes_path, line, format!("feature {f:?} is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        entries.push((id, ty, feats, line));
    }
    let n = entries.len();
    let mut node_type = vec![usize::MAX; n];
    let mut features = vec![Vec::new(); n];
    for (id, ty, feats, line) in entries {
        if id >= n {
            return Err(parse_err(nodes_path, line, format!("node_id {id} outside 0..{n}")));
        }
        if node_type[id] != usize::MAX {
            return Err(parse_err(nodes_path, line, format!("duplicate node_id {id}")));
        }
        node_type[id] = ty;
        features[id] = feats;
    }

    let text = read(edges_path)?;
    let head = header(edges_path, &text)?;
    if head != ["src", "edge_type", "dst"] {
        return Err(parse_err(edges_path, 1, "header must be src<TAB>edge_type<TAB>dst"));
    }
    let mut edge_names = Vec::new();
    let mut edges = Vec::new();
    for (line, fields) in rows(&text) {
        if fields.len() != 3 {
            return Err(parse_err(edges_path, line, format!("expected 3 columns, found {}", fields.len())));
        }
        let u = parse_id(edges_path, line, fields[0], "src")?;
        let v = parse_id(edges_path, line, fields[2], "dst")?;
        if u >= n || v >= n {
            return Err(parse_err(
                edges_path,
                line,
                format!("edge ({u}, {v}) references a node outside 0..{n}"),
            ));
        }
        let t = vocab_id(&mut edge_names, fields[1].trim());
        edges.push((u, t, v));
    }

    HeteroGraph::new(
        node_type,
        type_names,
        (feature_dim > 0).then_some(features),
        edge_names,
        &edges,
    )
}

/// Reads `node_id<TAB>label` rows; labels are integers.
pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<(usize, usize)>> {
    let path = path.as_ref();
    let text = read(path)?;
    let head = header(path, &text)?;
    if head != ["node_id", "label"] {
        return Err(parse_err(path, 1, "header must be node_id<TAB>label"));
    }
    rows(&text)
        .map(|(line, fields)| {
            if fields.len() != 2 {
                return Err(parse_err(path, line, format!("expected 2 columns, found {}", fields.len())));
            }
            Ok((parse_id(path, line, fields[0], "node_id")?, parse_id(path, line, fields[1], "label")?))
        })
        .collect()
}

/// Serialises a graph as the two TSV documents `(nodes, edges)`.
pub fn write_graph(g: &HeteroGraph) -> (String, String) {
    let mut nodes = String::from("node_id\tnode_type");
    if let Some(d) = g.feature_dim() {
        for i in 0..d {
            let _ = write!(nodes, "\tf{i}");
        }
    }
    nodes.push('\n');
    for v in 0..g.num_nodes() {
        let _ = write!(nodes, "{v}\t{}", g.node_type_names()[g.node_type(v)]);
        if let Some(f) = g.features(v) {
            for x in f {
                let _ = write!(nodes, "\t{x}");
            }
        }
        nodes.push('\n');
    }
    let mut edges = String::from("src\tedge_type\tdst\n");
    for (u, t, v) in g.edges() {
        let _ = writeln!(edges, "{u}\t{}\t{v}", g.edge_type_names()[t]);
    }
    (nodes, edges)
}

pub fn write_labels(labels: &[(usize, usize)]) -> String {
    let mut out = String::from("node_id\tlabel\n");
    for (v, l) in labels {
        let _ = writeln!(out, "{v}\t{l}");
    }
    out
}
