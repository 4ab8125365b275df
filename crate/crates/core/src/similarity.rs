//! Node-pair similarity and edge spillover annotation.
//!
//! All metrics map a pair of `[0, 1]`-valued feature vectors to `[0, 1]` and
//! are symmetric. The L2-based metric divides the distance by `sqrt(d)`,
//! the largest distance two vectors in the unit hypercube can have.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMetric {
    /// `1 - ||a - b||_2 / sqrt(d)`.
    #[default]
    #[serde(rename = "l2")]
    L2Based,
    /// Cosine of the angle, clamped at 0; 0 when either vector is zero.
    Cosine,
    /// Jaccard index of the supports `{k : x_k > 0}`; 0 when both are empty.
    Jaccard,
}

impl SimilarityMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            SimilarityMetric::L2Based => "l2",
            SimilarityMetric::Cosine => "cosine",
            SimilarityMetric::Jaccard => "jaccard",
        }
    }

    /// Similarity without input validation. Callers guarantee equal lengths.
    pub(crate) fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        let raw = match self {
            SimilarityMetric::L2Based => {
                let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                1.0 - sq.sqrt() / (a.len() as f64).sqrt()
            }
            SimilarityMetric::Cosine => {
                let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
                for (x, y) in a.iter().zip(b) {
                    dot += x * y;
                    na += x * x;
                    nb += y * y;
                }
                if na == 0.0 || nb == 0.0 {
                    0.0
                } else {
                    dot / (na.sqrt() * nb.sqrt())
                }
            }
            SimilarityMetric::Jaccard => {
                let (mut inter, mut union) = (0usize, 0usize);
                for (x, y) in a.iter().zip(b) {
                    let (px, py) = (*x > 0.0, *y > 0.0);
                    inter += usize::from(px && py);
                    union += usize::from(px || py);
                }
                if union == 0 {
                    0.0
                } else {
                    inter as f64 / union as f64
                }
            }
        };
        raw.clamp(0.0, 1.0)
    }
}

impl fmt::Display for SimilarityMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimilarityMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(SimilarityMetric::L2Based),
            "cosine" => Ok(SimilarityMetric::Cosine),
            "jaccard" => Ok(SimilarityMetric::Jaccard),
            other => Err(Error::InvalidArgument(format!(
                "unknown similarity '{other}' (expected l2, cosine or jaccard)"
            ))),
        }
    }
}

pub fn node_similarity(a: &[f64], b: &[f64], metric: SimilarityMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("feature vectors are empty".into()));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("feature vector contains NaN".into()));
    }
    Ok(metric.eval(a, b))
}

/// Similarity of two nodes of `graph`.
pub fn graph_similarity(
    graph: &AttributedGraph,
    a: usize,
    b: usize,
    metric: SimilarityMetric,
) -> Result<f64> {
    Ok(metric.eval(graph.require_features(a)?, graph.require_features(b)?))
}

/// Sets every edge weight to the similarity of its endpoints, replacing any
/// existing weights. Topology is left untouched.
pub fn annotate_edge_spillover(
    graph: AttributedGraph,
    metric: SimilarityMetric,
) -> Result<AttributedGraph> {
    if !graph.has_features() {
        return Err(Error::MissingFeatures);
    }
    let weights: Vec<f64> = graph
        .edges()
        .iter()
        .map(|&(a, b)| metric.eval(graph.features(a).unwrap(), graph.features(b).unwrap()))
        .collect();
    graph.with_edge_weights(weights)
}

/// Similarities of all unordered node pairs `i < j`, in row-major order.
pub fn pairwise_similarities(graph: &AttributedGraph, metric: SimilarityMetric) -> Result<Vec<f64>> {
    if !graph.has_features() {
        return Err(Error::MissingFeatures);
    }
    let n = graph.node_count();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = graph.features(i).unwrap();
            ((i + 1)..n)
                .map(|j| metric.eval(xi, graph.features(j).unwrap()))
                .collect()
        })
        .collect();
    Ok(rows.concat())
}

/// Nearest-rank quantile. `q = 0` returns 0.0, the threshold that admits
/// every strictly positive similarity.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile of an empty multiset"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("quantile level {q} is outside [0, 1]")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("quantile input contains NaN".into()));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let rank = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    let mut scratch = values.to_vec();
    let (_, nth, _) = scratch.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    Ok(*nth)
}
