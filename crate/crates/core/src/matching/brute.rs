//! Exhaustive matching search, used as a correctness oracle on tiny inputs.

use super::{Matching, WeightedMatchGraph};
use crate::error::{Error, Result};

/// Largest vertex count (or matrix side) accepted by the brute-force solvers.
pub const BRUTE_FORCE_LIMIT: usize = 12;

/// Maximum-weight matching by enumerating every matching.
pub fn brute_force_matching(graph: &WeightedMatchGraph) -> Result<Matching> {
    let n = graph.vertex_count();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            max: BRUTE_FORCE_LIMIT,
            got: n,
        });
    }
    let mut w = vec![vec![None; n]; n];
    for &(a, b, x) in graph.edges() {
        w[a][b] = Some(x);
        w[b][a] = Some(x);
    }
    let mut best = (0.0, Vec::new());
    let mut current = Vec::new();
    search(&w, 0, &mut vec![false; n], 0.0, &mut current, &mut best);
    Ok(Matching::from_pairs(best.1))
}

fn search(
    w: &[Vec<Option<f64>>],
    start: usize,
    used: &mut Vec<bool>,
    total: f64,
    current: &mut Vec<(usize, usize)>,
    best: &mut (f64, Vec<(usize, usize)>),
) {
    let n = w.len();
    let Some(v) = (start..n).find(|&v| !used[v]) else {
        if total > best.0 {
            *best = (total, current.clone());
        }
        return;
    };
    used[v] = true;
    // v stays unmatched
    search(w, v + 1, used, total, current, best);
    for u in (v + 1)..n {
        if let (false, Some(x)) = (used[u], w[v][u]) {
            used[u] = true;
            current.push((v, u));
            search(w, v + 1, used, total + x, current, best);
            current.pop();
            used[u] = false;
        }
    }
    used[v] = false;
}

/// Maximum-weight bipartite matching by enumerating row-to-column injections.
/// Returns `(row, col)` pairs with positive weight.
pub fn brute_force_bipartite(weights: &[Vec<f64>]) -> Result<Vec<(usize, usize)>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows.max(cols) > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            max: BRUTE_FORCE_LIMIT,
            got: rows.max(cols),
        });
    }
    fn go(
        weights: &[Vec<f64>],
        r: usize,
        used: &mut Vec<bool>,
        total: f64,
        current: &mut Vec<(usize, usize)>,
        best: &mut (f64, Vec<(usize, usize)>),
    ) {
        if r == weights.len() {
            if total > best.0 {
                *best = (total, current.clone());
            }
            return;
        }
        go(weights, r + 1, used, total, current, best);
        for c in 0..used.len() {
            if !used[c] && weights[r][c] > 0.0 {
                used[c] = true;
                current.push((r, c));
                go(weights, r + 1, used, total + weights[r][c], current, best);
                current.pop();
                used[c] = false;
            }
        }
    }
    let mut best = (0.0, Vec::new());
    go(weights, 0, &mut vec![false; cols], 0.0, &mut Vec::new(), &mut best);
    Ok(best.1)
}
