//! Markov Clustering over a sparse column-stochastic matrix.
//!
//! Each iteration squares the flow matrix `expansion - 1` times, raises the
//! entries to the `inflation` power, renormalizes columns and prunes entries
//! below `prune_threshold`. Clusters are read off the limit matrix through
//! its attractors (nodes with positive diagonal flow).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Clustering;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MclParams {
    pub inflation: f64,
    pub expansion: u32,
    pub prune_threshold: f64,
    pub max_iterations: usize,
    pub convergence_epsilon: f64,
    /// Self-loop weight relative to the largest edge weight of the graph.
    pub self_loop_weight: f64,
}

impl Default for MclParams {
    fn default() -> Self {
        MclParams {
            inflation: 2.0,
            expansion: 2,
            prune_threshold: 1e-5,
            max_iterations: 200,
            convergence_epsilon: 1e-6,
            self_loop_weight: 1.0,
        }
    }
}

impl MclParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.inflation > 1.0 && self.inflation.is_finite()) {
            return bad(format!("MCL inflation must exceed 1, got {}", self.inflation));
        }
        if self.expansion < 2 {
            return bad(format!("MCL expansion must be at least 2, got {}", self.expansion));
        }
        if !(self.prune_threshold > 0.0 && self.prune_threshold < 1.0) {
            return bad(format!(
                "MCL prune threshold must lie in (0, 1), got {}",
                self.prune_threshold
            ));
        }
        if self.max_iterations == 0 {
            return bad("MCL max_iterations must be positive".into());
        }
        if !(self.convergence_epsilon > 0.0) {
            return bad("MCL convergence_epsilon must be positive".into());
        }
        if !(self.self_loop_weight > 0.0 && self.self_loop_weight.is_finite()) {
            return bad("MCL self_loop_weight must be positive".into());
        }
        Ok(())
    }
}

/// Result of [`mcl`]. When `converged` is false the clustering is read off
/// the last iterate.
#[derive(Debug, Clone)]
pub struct MclOutcome {
    pub clustering: Clustering,
    pub converged: bool,
    pub iterations: usize,
}

/// Sparse column: `(row, value)` sorted by row.
type Column = Vec<(usize, f64)>;

pub fn mcl(graph: &AttributedGraph, params: &MclParams) -> Result<MclOutcome> {
    params.validate()?;
    let weights = graph.edge_weights().ok_or(Error::MissingWeights)?;
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "MCL requires finite non-negative weights, found {w}"
        )));
    }
    let n = graph.node_count();
    let max_weight = weights.iter().copied().fold(0.0, f64::max);
    let loop_weight = params.self_loop_weight * if max_weight > 0.0 { max_weight } else { 1.0 };

    let mut matrix: Vec<Column> = (0..n)
        .map(|j| {
            let mut col: Column = graph
                .incident(j)
                .iter()
                .filter(|&&(_, e)| weights[e] > 0.0)
                .map(|&(i, e)| (i, weights[e]))
                .collect();
            let pos = col.partition_point(|&(i, _)| i < j);
            col.insert(pos, (j, loop_weight));
            normalize(&mut col);
            col
        })
        .collect();

    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iterations {
        iterations += 1;
        let mut expanded = multiply(&matrix, &matrix);
        for _ in 2..params.expansion {
            expanded = multiply(&expanded, &matrix);
        }
        let next: Vec<Column> = expanded
            .into_par_iter()
            .map(|mut col| {
                inflate(&mut col, params.inflation, params.prune_threshold);
                col
            })
            .collect();
        let change = next
            .par_iter()
            .zip(&matrix)
            .map(|(a, b)| max_abs_diff(a, b))
            .reduce(|| 0.0, f64::max);
        matrix = next;
        if change < params.convergence_epsilon {
            converged = true;
            break;
        }
    }

    Ok(MclOutcome {
        clustering: interpret(&matrix),
        converged,
        iterations,
    })
}

fn normalize(col: &mut Column) {
    let sum: f64 = col.iter().map(|&(_, v)| v).sum();
    if sum > 0.0 {
        for (_, v) in col.iter_mut() {
            *v /= sum;
        }
    }
}

fn inflate(col: &mut Column, inflation: f64, prune: f64) {
    for (_, v) in col.iter_mut() {
        *v = v.powf(inflation);
    }
    normalize(col);
    if col.iter().any(|&(_, v)| v < prune) {
        // keep the heaviest entry even if every entry falls below the threshold
        let keep = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i);
        let mut idx = 0;
        col.retain(|&(_, v)| {
            let ok = v >= prune || Some(idx) == keep;
            idx += 1;
            ok
        });
        normalize(col);
    }
}

/// `left * right` for column-major sparse matrices.
fn multiply(left: &[Column], right: &[Column]) -> Vec<Column> {
    let n = left.len();
    right
        .par_iter()
        .map_init(
            || (vec![0.0f64; n], vec![false; n], Vec::<usize>::new()),
            |(acc, mark, touched), col| {
                for &(k, rk) in col {
                    for &(i, lik) in &left[k] {
                        if !mark[i] {
                            mark[i] = true;
                            touched.push(i);
                        }
                        acc[i] += lik * rk;
                    }
                }
                touched.sort_unstable();
                let out: Column = touched.iter().map(|&i| (i, acc[i])).collect();
                for &i in touched.iter() {
                    acc[i] = 0.0;
                    mark[i] = false;
                }
                touched.clear();
                out
            },
        )
        .collect()
}

fn max_abs_diff(a: &Column, b: &Column) -> f64 {
    let (mut i, mut j, mut worst) = (0, 0, 0.0f64);
    while i < a.len() || j < b.len() {
        let d = match (a.get(i), b.get(j)) {
            (Some(&(ra, va)), Some(&(rb, vb))) if ra == rb => {
                i += 1;
                j += 1;
                (va - vb).abs()
            }
            (Some(&(ra, va)), Some(&(rb, _))) if ra < rb => {
                i += 1;
                va
            }
            (Some(&(_, va)), None) => {
                i += 1;
                va
            }
            (_, Some(&(_, vb))) => {
                j += 1;
                vb
            }
            (None, None) => unreachable!(),
        };
        worst = worst.max(d);
    }
    worst
}

struct DisjointSet(Vec<usize>);

impl DisjointSet {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // keep the smaller index as root
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Attractor-based interpretation of the limit matrix. Column `j` lists the
/// rows that node `j` flows to; node `j` joins the lowest-indexed attractor
/// among them. Attractors flowing into each other form one cluster. Nodes
/// without an attractor (only possible before convergence) follow their
/// heaviest entry.
fn interpret(matrix: &[Column]) -> Clustering {
    let n = matrix.len();
    let attractor: Vec<bool> = matrix
        .iter()
        .enumerate()
        .map(|(j, col)| col.iter().any(|&(i, v)| i == j && v > 0.0))
        .collect();
    let mut sets = DisjointSet((0..n).collect());
    for (j, col) in matrix.iter().enumerate() {
        if attractor[j] {
            for &(i, v) in col {
                if attractor[i] && v > 0.0 {
                    sets.union(i, j);
                }
            }
        }
    }
    for (j, col) in matrix.iter().enumerate() {
        if attractor[j] {
            continue;
        }
        let target = col
            .iter()
            .find(|&&(i, v)| attractor[i] && v > 0.0)
            .map(|&(i, _)| i)
            .or_else(|| {
                col.iter()
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|&(i, _)| i)
            });
        if let Some(t) = target {
            sets.union(j, t);
        }
    }
    let roots: Vec<usize> = (0..n).map(|j| sets.find(j)).collect();
    Clustering::from_labels(&roots)
}
