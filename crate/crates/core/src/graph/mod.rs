//! Attributed undirected graphs and their file formats.
//!
//! Nodes are dense indices `0..n`. Each node optionally carries a feature
//! vector with components in `[0, 1]`; each edge optionally carries a
//! spillover weight in `[0, 1]`. A graph is immutable once built, so it can
//! be shared freely between worker threads.

mod io;
mod sbm;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{
    load_attributes, load_edge_list, load_graph, save_graph, AttributeScaling, EdgeListLoad,
    GraphFiles, IdMap, Sidecar,
};
pub use sbm::{generate_sbm, generate_sbm_with_prototypes, SbmParams};
pub(crate) use io::write_atomically;

/// An undirected simple graph with node features and optional edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributedGraph {
    node_count: usize,
    /// Edges as `(low, high)` pairs, sorted.
    edges: Vec<(usize, usize)>,
    /// For every node, `(neighbor, edge index)` sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
    features: Option<Features>,
    weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Features {
    dim: usize,
    data: Vec<f64>,
}

impl AttributedGraph {
    /// Builds a graph from an edge list, rejecting self-loops and duplicates.
    pub fn from_edges<I>(node_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut seen = HashSet::new();
        let mut list = Vec::new();
        for (a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{node_count}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    key.0, key.1
                )));
            }
            list.push(key);
        }
        Ok(Self::from_canonical(node_count, list))
    }

    /// `edges` must already be deduplicated with `low < high`.
    fn from_canonical(node_count: usize, mut edges: Vec<(usize, usize)>) -> Self {
        edges.sort_unstable();
        let mut adjacency = vec![Vec::new(); node_count];
        for (idx, &(a, b)) in edges.iter().enumerate() {
            adjacency[a].push((b, idx));
            adjacency[b].push((a, idx));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        AttributedGraph {
            node_count,
            edges,
            adjacency,
            features: None,
            weights: None,
        }
    }

    /// Attaches one feature vector per node. Components must lie in `[0, 1]`.
    pub fn with_features(mut self, features: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != self.node_count {
            return Err(Error::InvalidGraph(format!(
                "expected {} feature vectors, got {}",
                self.node_count,
                features.len()
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        if self.node_count > 0 && dim == 0 {
            return Err(Error::InvalidGraph(
                "feature vectors must have dimension >= 1".into(),
            ));
        }
        let mut data = Vec::with_capacity(dim * self.node_count);
        for (node, row) in features.into_iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            if let Some(bad) = row.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::InvalidGraph(format!(
                    "feature value {bad} of node {node} is outside [0, 1]"
                )));
            }
            data.extend(row);
        }
        self.features = Some(Features { dim, data });
        Ok(self)
    }

    /// Attaches one weight per edge, in the order returned by [`edges`](Self::edges).
    pub fn with_edge_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.edges.len() {
            return Err(Error::InvalidGraph(format!(
                "expected {} edge weights, got {}",
                self.edges.len(),
                weights.len()
            )));
        }
        if let Some(bad) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidGraph(format!(
                "edge weight {bad} is outside [0, 1]"
            )));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn without_edge_weights(mut self) -> Self {
        self.weights = None;
        self
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as `(low, high)` node pairs in ascending order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbors of `node` in ascending order.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[node].iter().map(|&(n, _)| n)
    }

    /// `(neighbor, edge index)` pairs of `node` in ascending neighbor order.
    pub fn incident(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let list = self.adjacency.get(a)?;
        list.binary_search_by_key(&b, |&(n, _)| n)
            .ok()
            .map(|pos| list[pos].1)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edge_index(a, b).is_some()
    }

    pub fn has_features(&self) -> bool {
        self.features.is_some()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.features.as_ref().map(|f| f.dim)
    }

    pub fn features(&self, node: usize) -> Option<&[f64]> {
        self.features
            .as_ref()
            .map(|f| &f.data[node * f.dim..(node + 1) * f.dim])
    }

    /// Feature vector of `node`, or [`Error::MissingFeatures`].
    pub fn require_features(&self, node: usize) -> Result<&[f64]> {
        self.features(node).ok_or(Error::MissingFeatures)
    }

    pub fn edge_weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn edge_weight(&self, edge: usize) -> Option<f64> {
        self.weights.as_ref().map(|w| w[edge])
    }
}

/// Lenient graph construction used by the file loaders: self-loops and
/// repeated edges are counted and dropped instead of rejected.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<Option<f64>>,
    seen: HashSet<(usize, usize)>,
    dropped: usize,
}

impl GraphBuilder {
    pub fn new(node_count: usize) -> Self {
        GraphBuilder {
            node_count,
            ..Default::default()
        }
    }

    /// Returns `false` when the edge was dropped.
    pub fn add_edge(&mut self, a: usize, b: usize, weight: Option<f64>) -> bool {
        if a == b || a >= self.node_count || b >= self.node_count {
            self.dropped += 1;
            return false;
        }
        let key = (a.min(b), a.max(b));
        if !self.seen.insert(key) {
            self.dropped += 1;
            return false;
        }
        self.edges.push(key);
        self.weights.push(weight);
        true
    }

    pub fn dropped(&self) -> usize {
        self.dropped
    }

    /// Weights are attached only if every kept edge carried one.
    pub fn build(self) -> Result<AttributedGraph> {
        let mut pairs: Vec<_> = self.edges.into_iter().zip(self.weights).collect();
        pairs.sort_unstable_by_key(|&(e, _)| e);
        let all_weighted = !pairs.is_empty() && pairs.iter().all(|(_, w)| w.is_some());
        let any_weighted = pairs.iter().any(|(_, w)| w.is_some());
        if any_weighted && !all_weighted {
            return Err(Error::InvalidGraph(
                "either every edge or no edge must carry a weight".into(),
            ));
        }
        let weights: Vec<f64> = pairs.iter().filter_map(|(_, w)| *w).collect();
        let graph = AttributedGraph::from_canonical(
            self.node_count,
            pairs.into_iter().map(|(e, _)| e).collect(),
        );
        if all_weighted {
            graph.with_edge_weights(weights)
        } else {
            Ok(graph)
        }
    }
}

/// Experimental arm of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Treated,
    Control,
    Excluded,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Treated => "treated",
            Arm::Control => "control",
            Arm::Excluded => "excluded",
        }
    }

    pub fn opposite(self) -> Arm {
        match self {
            Arm::Treated => Arm::Control,
            Arm::Control => Arm::Treated,
            Arm::Excluded => Arm::Excluded,
        }
    }

    pub fn is_assigned(self) -> bool {
        self != Arm::Excluded
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "treated" | "1" => Ok(Arm::Treated),
            "control" | "0" => Ok(Arm::Control),
            "excluded" | "" => Ok(Arm::Excluded),
            other => Err(Error::InvalidArgument(format!("unknown arm '{other}'"))),
        }
    }
}

/// Per-node treatment labels. Treated and control sets are disjoint by
/// construction since every node carries exactly one [`Arm`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLabeling {
    arms: Vec<Arm>,
}

impl NodeLabeling {
    pub fn new(arms: Vec<Arm>) -> Self {
        NodeLabeling { arms }
    }

    pub fn all(node_count: usize, arm: Arm) -> Self {
        NodeLabeling {
            arms: vec![arm; node_count],
        }
    }

    pub fn arm(&self, node: usize) -> Arm {
        self.arms[node]
    }

    pub fn set(&mut self, node: usize, arm: Arm) {
        self.arms[node] = arm;
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn count(&self, arm: Arm) -> usize {
        self.arms.iter().filter(|&&a| a == arm).count()
    }

    pub fn nodes_in(&self, arm: Arm) -> impl Iterator<Item = usize> + '_ {
        self.arms
            .iter()
            .enumerate()
            .filter(move |(_, &a)| a == arm)
            .map(|(i, _)| i)
    }

    /// `|V0| + |V1|`.
    pub fn kept_count(&self) -> usize {
        self.arms.iter().filter(|a| a.is_assigned()).count()
    }
}
