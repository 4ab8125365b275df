//! Edge-list, attribute CSV and JSON sidecar formats.
//!
//! Edge lists hold one `src dst [weight]` record per line, separated by
//! whitespace or commas. A line with a single token declares an isolated
//! node. Blank lines and lines starting with `#` are ignored.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AttributedGraph, GraphBuilder};
use crate::error::{Error, Result};

/// Mapping between external string ids and dense node indices.
///
/// Indices follow the lexicographic order of the ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMap {
    ids: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_ids<I: IntoIterator<Item = String>>(ids: I) -> Self {
        let sorted: BTreeSet<String> = ids.into_iter().collect();
        Self::from_sorted(sorted.into_iter().collect())
    }

    fn from_sorted(ids: Vec<String>) -> Self {
        let index = ids.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        IdMap { ids, index }
    }

    /// Ids `0..n` zero-padded so that lexicographic and numeric order agree.
    pub fn sequential(n: usize) -> Self {
        let width = n.saturating_sub(1).to_string().len();
        Self::from_sorted((0..n).map(|i| format!("{i:0width$}")).collect())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }
}

/// Per-attribute min-max parameters used to map raw values to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeScaling {
    pub names: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl AttributeScaling {
    /// Scales `columns[attr][node]` in place; constant columns map to 0.
    fn fit_transform(names: Vec<String>, columns: &mut [Vec<f64>]) -> Self {
        let mut min = Vec::with_capacity(columns.len());
        let mut max = Vec::with_capacity(columns.len());
        for col in columns.iter_mut() {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            for x in col.iter_mut() {
                *x = if span > 0.0 { (*x - lo) / span } else { 0.0 };
            }
            min.push(lo);
            max.push(hi);
        }
        AttributeScaling { names, min, max }
    }

    /// Identity scaling for features that are already in `[0, 1]`.
    pub fn identity(dim: usize) -> Self {
        AttributeScaling {
            names: (1..=dim).map(|i| format!("attr{i}")).collect(),
            min: vec![0.0; dim],
            max: vec![1.0; dim],
        }
    }
}

/// Result of [`load_edge_list`].
#[derive(Debug, Clone)]
pub struct EdgeListLoad {
    pub graph: AttributedGraph,
    pub ids: IdMap,
    /// Number of self-loop and duplicate lines that were dropped.
    pub warnings: usize,
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<EdgeListLoad> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records: Vec<(String, Option<(String, Option<f64>)>)> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = trimmed
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .collect();
        let record = match tokens.as_slice() {
            [id] => (id.to_string(), None),
            [a, b] => (a.to_string(), Some((b.to_string(), None))),
            [a, b, w] => {
                let weight: f64 = w.parse().map_err(|_| {
                    Error::parse(path, lineno + 1, format!("weight '{w}' is not a number"))
                })?;
                if !(0.0..=1.0).contains(&weight) {
                    return Err(Error::parse(
                        path,
                        lineno + 1,
                        format!("weight {weight} is outside [0, 1]"),
                    ));
                }
                (a.to_string(), Some((b.to_string(), Some(weight))))
            }
            _ => {
                return Err(Error::parse(
                    path,
                    lineno + 1,
                    format!("expected 'src dst [weight]', got {} fields", tokens.len()),
                ))
            }
        };
        records.push(record);
    }

    let ids = IdMap::from_ids(
        records
            .iter()
            .flat_map(|(a, b)| std::iter::once(a.clone()).chain(b.iter().map(|(b, _)| b.clone()))),
    );
    if ids.is_empty() {
        return Err(Error::InvalidGraph(format!(
            "{} contains no nodes",
            path.display()
        )));
    }

    let mut builder = GraphBuilder::new(ids.len());
    for (a, rest) in &records {
        if let Some((b, w)) = rest {
            let (ia, ib) = (ids.index(a).unwrap(), ids.index(b).unwrap());
            builder.add_edge(ia, ib, *w);
        }
    }
    let warnings = builder.dropped();
    if warnings > 0 {
        log::warn!(
            "{}: dropped {warnings} self-loop or duplicate edge lines",
            path.display()
        );
    }
    let graph = builder.build()?;
    Ok(EdgeListLoad {
        graph,
        ids,
        warnings,
    })
}

/// Reads `node_id,attr1,...,attrd` rows and attaches min-max scaled features.
pub fn load_attributes(
    path: impl AsRef<Path>,
    graph: AttributedGraph,
    ids: &IdMap,
) -> Result<(AttributedGraph, AttributeScaling)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() < 2 {
        return Err(Error::parse(
            path,
            1,
            "header must be node_id followed by at least one attribute",
        ));
    }
    let dim = headers.len() - 1;
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();

    let n = graph.node_count();
    let mut columns = vec![vec![f64::NAN; n]; dim];
    let mut seen = vec![false; n];
    for (row_idx, record) in reader.records().enumerate() {
        let line = row_idx + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        if record.len() != dim + 1 {
            return Err(Error::parse(
                path,
                line,
                format!("expected {} attributes, found {}", dim, record.len().saturating_sub(1)),
            ));
        }
        let id = &record[0];
        let node = ids
            .index(id)
            .ok_or_else(|| Error::parse(path, line, format!("unknown node id '{id}'")))?;
        if seen[node] {
            return Err(Error::parse(path, line, format!("duplicate row for node '{id}'")));
        }
        seen[node] = true;
        for (attr, cell) in record.iter().skip(1).enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                Error::parse(path, line, format!("attribute value '{cell}' is not numeric"))
            })?;
            if !value.is_finite() {
                return Err(Error::parse(path, line, format!("attribute value '{cell}' is not finite")));
            }
            columns[attr][node] = value;
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::parse(
            path,
            0,
            format!("missing attribute row for node '{}'", ids.id(missing)),
        ));
    }

    let scaling = AttributeScaling::fit_transform(names, &mut columns);
    let features = (0..n)
        .map(|node| columns.iter().map(|col| col[node]).collect())
        .collect();
    Ok((graph.with_features(features)?, scaling))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

/// A graph together with the metadata needed to write it back out.
#[derive(Debug, Clone)]
pub struct GraphFiles {
    pub graph: AttributedGraph,
    pub ids: IdMap,
    pub scaling: Option<AttributeScaling>,
    pub warnings: usize,
}

/// Loads an edge list and, optionally, its attribute table.
pub fn load_graph(edges: impl AsRef<Path>, attributes: Option<&Path>) -> Result<GraphFiles> {
    let EdgeListLoad {
        graph,
        ids,
        warnings,
    } = load_edge_list(edges)?;
    let (graph, scaling) = match attributes {
        Some(path) => {
            let (g, s) = load_attributes(path, graph, &ids)?;
            (g, Some(s))
        }
        None => (graph, None),
    };
    Ok(GraphFiles {
        graph,
        ids,
        scaling,
        warnings,
    })
}

/// JSON sidecar written next to a saved graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub edges: PathBuf,
    pub attributes: Option<PathBuf>,
    pub ids: Vec<String>,
    pub scaling: Option<AttributeScaling>,
}

/// Writes `<prefix>.edges`, `<prefix>.attributes.csv` (when features are
/// present) and `<prefix>.json`. Returns the sidecar contents.
pub fn save_graph(
    prefix: impl AsRef<Path>,
    graph: &AttributedGraph,
    ids: &IdMap,
    scaling: Option<&AttributeScaling>,
) -> Result<Sidecar> {
    let prefix = prefix.as_ref();
    if ids.len() != graph.node_count() {
        return Err(Error::InvalidArgument(format!(
            "id map has {} entries for {} nodes",
            ids.len(),
            graph.node_count()
        )));
    }
    let with_suffix = |suffix: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    let edges_path = with_suffix(".edges");
    let mut out = String::new();
    for node in 0..graph.node_count() {
        if graph.degree(node) == 0 {
            out.push_str(ids.id(node));
            out.push('\n');
        }
    }
    for (idx, &(a, b)) in graph.edges().iter().enumerate() {
        out.push_str(ids.id(a));
        out.push(' ');
        out.push_str(ids.id(b));
        if let Some(w) = graph.edge_weight(idx) {
            out.push(' ');
            out.push_str(&w.to_string());
        }
        out.push('\n');
    }
    write_atomically(&edges_path, out.as_bytes())?;

    let attributes_path = match graph.feature_dim() {
        Some(dim) => {
            let path = with_suffix(".attributes.csv");
            let identity;
            let scaling = match scaling {
                Some(s) => s,
                None => {
                    identity = AttributeScaling::identity(dim);
                    &identity
                }
            };
            let mut writer = csv::Writer::from_writer(Vec::new());
            let header = std::iter::once("node_id").chain(scaling.names.iter().map(String::as_str));
            writer.write_record(header).map_err(|e| csv_error(&path, e))?;
            for node in 0..graph.node_count() {
                let features = graph.features(node).unwrap();
                let row = std::iter::once(ids.id(node).to_string())
                    .chain(features.iter().map(|x| x.to_string()));
                writer.write_record(row).map_err(|e| csv_error(&path, e))?;
            }
            let bytes = writer
                .into_inner()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            write_atomically(&path, &bytes)?;
            Some(path)
        }
        None => None,
    };

    let sidecar = Sidecar {
        edges: edges_path,
        attributes: attributes_path,
        ids: ids.ids().to_vec(),
        scaling: scaling.cloned(),
    };
    let json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    write_atomically(&with_suffix(".json"), &json)?;
    Ok(sidecar)
}

/// Writes to a temporary sibling file and renames it into place.
pub(crate) fn write_atomically(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    {
        let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
