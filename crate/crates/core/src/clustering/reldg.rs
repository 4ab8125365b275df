use rand::seq::SliceRandom;

use super::Clustering;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::seed;

/// Restreaming linear deterministic greedy partitioning into at most `k`
/// clusters of capacity `ceil(n / k)`.
///
/// Nodes are streamed in one seeded random order, `passes` times. Node `v`
/// joins the non-full cluster maximizing `|N(v) ∩ C| * (1 - |C| / capacity)`;
/// ties go to the smaller cluster, then the lower index. Neighbor counts use
/// the latest known placement of each neighbor (current pass if already
/// streamed, previous pass otherwise), while sizes count only the current
/// pass. Edge weights are ignored. Empty clusters are dropped from the
/// result, so fewer than `k` clusters may come back.
pub fn reldg(graph: &AttributedGraph, k: usize, passes: usize, seed: u64) -> Result<Clustering> {
    let n = graph.node_count();
    if k == 0 {
        return Err(Error::InvalidArgument("reLDG needs k >= 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "reLDG asked for {k} clusters on {n} nodes"
        )));
    }
    let capacity = n.div_ceil(k);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::stream(seed, "reldg-order", 0));

    let mut placement: Vec<Option<usize>> = vec![None; n];
    let mut neighbor_counts = vec![0usize; k];
    let mut touched = Vec::new();
    for _ in 0..passes.max(1) {
        let mut sizes = vec![0usize; k];
        for &v in &order {
            for u in graph.neighbors(v) {
                if let Some(c) = placement[u] {
                    if neighbor_counts[c] == 0 {
                        touched.push(c);
                    }
                    neighbor_counts[c] += 1;
                }
            }
            let mut best: Option<(f64, usize, usize)> = None;
            for (c, &size) in sizes.iter().enumerate() {
                if size >= capacity {
                    continue;
                }
                let score = neighbor_counts[c] as f64 * (1.0 - size as f64 / capacity as f64);
                let better = match best {
                    None => true,
                    Some((bs, bsize, _)) => score > bs || (score == bs && size < bsize),
                };
                if better {
                    best = Some((score, size, c));
                }
            }
            for c in touched.drain(..) {
                neighbor_counts[c] = 0;
            }
            let (_, _, chosen) = best.expect("total capacity covers every node");
            placement[v] = Some(chosen);
            sizes[chosen] += 1;
        }
    }
    let labels: Vec<usize> = placement.into_iter().map(Option::unwrap).collect();
    Ok(Clustering::from_labels(&labels))
}
