//! Exact maximum-weight matching.
//!
//! General graphs are solved with Edmonds' blossom algorithm using primal-dual
//! updates in integer arithmetic; rectangular bipartite weight matrices with
//! the Hungarian method. Both return only strictly positive-weight pairs.

mod bipartite;
mod blossom;
mod brute;

use std::collections::HashSet;

use crate::error::{Error, Result};

pub use bipartite::max_weight_bipartite;
pub use brute::{brute_force_bipartite, brute_force_matching, BRUTE_FORCE_LIMIT};

/// Undirected graph with non-negative edge weights, the input of
/// [`max_weight_matching`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMatchGraph {
    vertex_count: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl WeightedMatchGraph {
    pub fn new(vertex_count: usize) -> Self {
        WeightedMatchGraph {
            vertex_count,
            edges: Vec::new(),
        }
    }

    pub fn from_edges<I>(vertex_count: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let mut g = Self::new(vertex_count);
        let mut seen = HashSet::new();
        for (a, b, w) in edges {
            if !seen.insert((a.min(b), a.max(b))) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a}, {b})")));
            }
            g.add_edge(a, b, w)?;
        }
        Ok(g)
    }

    /// Adds an edge without checking for duplicates.
    pub fn add_edge(&mut self, a: usize, b: usize, weight: f64) -> Result<()> {
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop on vertex {a}")));
        }
        if a >= self.vertex_count || b >= self.vertex_count {
            return Err(Error::InvalidGraph(format!(
                "edge ({a}, {b}) outside 0..{}",
                self.vertex_count
            )));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidGraph(format!(
                "edge weight {weight} must be finite and non-negative"
            )));
        }
        self.edges.push((a, b, weight));
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        self.edges
            .iter()
            .find(|&&(x, y, _)| (x, y) == (a, b) || (y, x) == (a, b))
            .map(|&(_, _, w)| w)
    }
}

/// A set of vertex-disjoint pairs `(low, high)` in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    pairs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn from_pairs<I: IntoIterator<Item = (usize, usize)>>(pairs: I) -> Self {
        let mut pairs: Vec<_> = pairs.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        pairs.sort_unstable();
        Matching { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// True when no vertex appears in two pairs.
    pub fn is_valid(&self) -> bool {
        let mut seen = HashSet::new();
        self.pairs.iter().all(|&(a, b)| a != b && seen.insert(a) && seen.insert(b))
    }

    /// Total weight of the pairs in `graph`; pairs absent from the graph
    /// count as zero.
    pub fn total_weight(&self, graph: &WeightedMatchGraph) -> f64 {
        self.pairs
            .iter()
            .map(|&(a, b)| graph.weight(a, b).unwrap_or(0.0))
            .sum()
    }
}

/// Largest value used for integer-quantized weights.
const QUANT_MAX: f64 = (1u64 << 40) as f64;

/// Converts weights to integers. Integral inputs are used as-is; others are
/// scaled so that the largest weight maps to 2^40.
fn quantize(weights: impl Iterator<Item = f64> + Clone) -> Vec<i64> {
    let integral = weights.clone().all(|w| w.fract() == 0.0 && w <= QUANT_MAX);
    if integral {
        return weights.map(|w| w as i64).collect();
    }
    let max = weights.clone().fold(0.0, f64::max);
    let scale = QUANT_MAX / max;
    weights.map(|w| (w * scale).round() as i64).collect()
}

/// Dense instances are first solved on each vertex's heaviest edges.
const SPARSE_AVERAGE_DEGREE: usize = 32;

/// Exact solve that avoids scanning every edge of dense graphs in every
/// stage. The instance restricted to each vertex's `SPARSE_AVERAGE_DEGREE`
/// heaviest edges is solved first; every omitted edge whose reduced cost is
/// negative under the resulting duals is added back and the restricted
/// instance is solved again. Once no omitted edge has negative reduced cost
/// the duals certify optimality for the full graph.
fn solve_sparse_first(n: usize, edges: &[(usize, usize, i64)]) -> Vec<Option<usize>> {
    let k = SPARSE_AVERAGE_DEGREE;
    if edges.len() <= k * n {
        return blossom::solve(n, edges).mate;
    }
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (idx, &(a, b, _)) in edges.iter().enumerate() {
        incident[a].push(idx);
        incident[b].push(idx);
    }
    let mut chosen = vec![false; edges.len()];
    for list in &mut incident {
        list.sort_unstable_by(|&x, &y| edges[y].2.cmp(&edges[x].2).then(x.cmp(&y)));
        for &idx in list.iter().take(k) {
            chosen[idx] = true;
        }
    }
    loop {
        let subset: Vec<(usize, usize, i64)> = edges
            .iter()
            .zip(&chosen)
            .filter(|(_, &c)| c)
            .map(|(e, _)| *e)
            .collect();
        let solution = blossom::solve(n, &subset);
        let mut violated = 0usize;
        for (idx, &(a, b, w)) in edges.iter().enumerate() {
            if !chosen[idx] && solution.slack(a, b, w) < 0 {
                chosen[idx] = true;
                violated += 1;
            }
        }
        if violated == 0 {
            return solution.mate;
        }
        log::debug!("restricted matching missed {violated} edges; solving again");
    }
}

/// Maximum-weight (not maximum-cardinality) matching.
///
/// Ties between optimal matchings are broken deterministically by the
/// algorithm's ascending vertex and edge processing order.
pub fn max_weight_matching(graph: &WeightedMatchGraph) -> Matching {
    let positive: Vec<(usize, usize, f64)> =
        graph.edges.iter().copied().filter(|&(_, _, w)| w > 0.0).collect();
    if positive.is_empty() {
        return Matching::default();
    }
    let ints = quantize(positive.iter().map(|&(_, _, w)| w));
    let edges: Vec<(usize, usize, i64)> = positive
        .iter()
        .zip(ints)
        .map(|(&(a, b, _), w)| (a, b, w))
        .collect();
    let mate = solve_sparse_first(graph.vertex_count, &edges);
    let pairs = mate
        .iter()
        .enumerate()
        .filter_map(|(v, m)| m.filter(|&u| v < u).map(|u| (v, u)))
        .filter(|&(a, b)| graph.weight(a, b).is_some_and(|w| w > 0.0));
    Matching::from_pairs(pairs)
}
