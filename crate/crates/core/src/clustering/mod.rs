//! Graph clustering: Markov Clustering on weighted graphs and restreaming
//! linear deterministic greedy partitioning on unweighted graphs.

mod mcl;
mod reldg;

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, IdMap};

pub use mcl::{mcl, MclOutcome, MclParams};
pub use reldg::reldg;

/// A partition of the nodes into `count` nonempty clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    assignment: Vec<usize>,
    count: usize,
}

impl Clustering {
    /// Relabels arbitrary cluster labels to `0..g` in order of first
    /// appearance, so that every index is used.
    pub fn from_labels<L: Eq + std::hash::Hash + Copy>(labels: &[L]) -> Self {
        let mut remap = HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Clustering {
            assignment,
            count: remap.len(),
        }
    }

    /// Every node in its own cluster.
    pub fn singletons(n: usize) -> Self {
        Clustering {
            assignment: (0..n).collect(),
            count: n,
        }
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Number of clusters `g`.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn node_count(&self) -> usize {
        self.assignment.len()
    }

    /// Members of each cluster in ascending node order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (node, &c) in self.assignment.iter().enumerate() {
            out[c].push(node);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.count];
        for &c in &self.assignment {
            out[c] += 1;
        }
        out
    }

    /// Writes `node_id,cluster_id` rows.
    pub fn write_csv(&self, path: &Path, ids: &IdMap) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["node_id", "cluster_id"]).map_err(io)?;
        for (node, c) in self.assignment.iter().enumerate() {
            w.write_record([ids.id(node), &c.to_string()]).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        crate::graph::write_atomically(path, &bytes)
    }
}

/// Which clustering algorithm a design uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum ClustererConfig {
    Mcl(MclParams),
    Reldg {
        clusters: usize,
        #[serde(default = "default_restreams")]
        restreams: usize,
    },
}

fn default_restreams() -> usize {
    10
}

impl ClustererConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ClustererConfig::Mcl(_) => "mcl",
            ClustererConfig::Reldg { .. } => "reldg",
        }
    }

    /// Runs the configured algorithm. MCL requires edge weights; reLDG
    /// ignores them.
    pub fn cluster(&self, graph: &AttributedGraph, seed: u64) -> Result<Clustering> {
        match self {
            ClustererConfig::Mcl(params) => {
                let outcome = mcl(graph, params)?;
                if !outcome.converged {
                    log::warn!(
                        "MCL did not converge after {} iterations; using best-effort clustering",
                        outcome.iterations
                    );
                }
                Ok(outcome.clustering)
            }
            ClustererConfig::Reldg {
                clusters,
                restreams,
            } => reldg(graph, *clusters, *restreams, seed),
        }
    }
}

impl Default for ClustererConfig {
    fn default() -> Self {
        ClustererConfig::Mcl(MclParams::default())
    }
}
