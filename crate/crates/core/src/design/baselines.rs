use std::collections::BTreeMap;

use rayon::prelude::*;

use super::schemes::mean_distance_matrix;
use super::{with_spillover, DesignAssignment, DesignPlan, Method, PlanDiagnostics, Randomization};
use crate::clustering::{ClustererConfig, Clustering};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::matching::{max_weight_matching, WeightedMatchGraph};
use crate::seed;
use crate::similarity::SimilarityMetric;

pub const DEFAULT_MATCH_CUTOFF: usize = 3000;
pub const DEFAULT_MATCH_TOP_K: usize = 50;

/// Independent fair coin per node, ignoring the network.
pub fn plan_randomized(graph: &AttributedGraph) -> DesignPlan {
    let n = graph.node_count();
    DesignPlan {
        method: Method::Randomized,
        clustering: Clustering::singletons(n),
        randomization: Randomization::Nodes,
        diagnostics: PlanDiagnostics {
            cluster_count: n,
            ..Default::default()
        },
        warnings: Vec::new(),
    }
}

pub fn baseline_randomized(graph: &AttributedGraph, seed: u64) -> DesignAssignment {
    plan_randomized(graph).assign(seed)
}

/// Pairs clusters greedily by smallest distance between their mean feature
/// vectors (ties by lower indices). With an odd count the leftover cluster
/// forms a stratum of its own, listed last.
pub fn greedy_strata(graph: &AttributedGraph, clustering: &Clustering) -> Result<Vec<Vec<usize>>> {
    let g = clustering.count();
    let dist = mean_distance_matrix(graph, clustering)?;
    let mut pairs: Vec<(f64, usize, usize)> = (0..g)
        .flat_map(|i| ((i + 1)..g).map(move |j| (i, j)))
        .map(|(i, j)| (dist.get(i, j), i, j))
        .collect();
    pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut used = vec![false; g];
    let mut strata = Vec::with_capacity(g.div_ceil(2));
    for (_, i, j) in pairs {
        if !used[i] && !used[j] {
            used[i] = true;
            used[j] = true;
            strata.push(vec![i, j]);
        }
    }
    strata.extend((0..g).filter(|&c| !used[c]).map(|c| vec![c]));
    Ok(strata)
}

fn stratify(
    graph: &AttributedGraph,
    clusterer: &ClustererConfig,
    metric: SimilarityMetric,
    seed: u64,
) -> Result<(Clustering, Vec<Vec<usize>>)> {
    if !graph.has_features() {
        return Err(Error::MissingFeatures);
    }
    let weighted = with_spillover(graph, metric)?;
    let clustering = clusterer.cluster(&weighted, seed::derive_seed(seed, "cluster", 0))?;
    let strata = greedy_strata(graph, &clustering)?;
    Ok((clustering, strata))
}

/// Cluster-stratified randomization: strata of similar clusters, then an
/// independent coin per node. Since nodes are randomized independently the
/// strata affect only the reported diagnostics, not the draw.
pub fn plan_cr(
    graph: &AttributedGraph,
    clusterer: &ClustererConfig,
    metric: SimilarityMetric,
    seed: u64,
) -> Result<DesignPlan> {
    let (clustering, strata) = stratify(graph, clusterer, metric, seed)?;
    Ok(DesignPlan {
        method: Method::Cr,
        diagnostics: PlanDiagnostics {
            cluster_count: clustering.count(),
            strata: Some(strata.len()),
            ..Default::default()
        },
        clustering,
        randomization: Randomization::Nodes,
        warnings: Vec::new(),
    })
}

pub fn baseline_cr(
    graph: &AttributedGraph,
    clusterer: &ClustererConfig,
    metric: SimilarityMetric,
    seed: u64,
) -> Result<DesignAssignment> {
    Ok(plan_cr(graph, clusterer, metric, seed)?.assign(seed))
}

/// Cluster-based randomization within strata: each stratum of two clusters
/// sends one whole cluster to each arm. An odd leftover cluster is Excluded.
pub fn plan_cbr(
    graph: &AttributedGraph,
    clusterer: &ClustererConfig,
    metric: SimilarityMetric,
    seed: u64,
) -> Result<DesignPlan> {
    let (clustering, strata) = stratify(graph, clusterer, metric, seed)?;
    let pairs: Vec<(usize, usize)> = strata
        .iter()
        .filter(|s| s.len() == 2)
        .map(|s| (s[0], s[1]))
        .collect();
    let mut warnings = Vec::new();
    if pairs.is_empty() {
        warnings.push(format!(
            "clustering produced {} cluster(s); no strata to randomize, every node is excluded",
            clustering.count()
        ));
    }
    Ok(DesignPlan {
        method: Method::Cbr,
        diagnostics: PlanDiagnostics {
            cluster_count: clustering.count(),
            strata: Some(strata.len()),
            ..Default::default()
        },
        clustering,
        randomization: Randomization::ClusterPairs(pairs),
        warnings,
    })
}

pub fn baseline_cbr(
    graph: &AttributedGraph,
    clusterer: &ClustererConfig,
    metric: SimilarityMetric,
    seed: u64,
) -> Result<DesignAssignment> {
    Ok(plan_cbr(graph, clusterer, metric, seed)?.assign(seed))
}

/// Candidate node pairs for the match baseline: every pair when
/// `n <= cutoff`, otherwise the union of each node's `top_k` most similar
/// peers. Zero-similarity pairs are never useful and are left out.
fn match_candidates(
    graph: &AttributedGraph,
    metric: SimilarityMetric,
    cutoff: usize,
    top_k: usize,
) -> Result<WeightedMatchGraph> {
    let n = graph.node_count();
    let x = |v: usize| graph.features(v).unwrap();
    let rows: Vec<Vec<(usize, usize, f64)>> = if n <= cutoff {
        (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| (i, j, metric.eval(x(i), x(j))))
                    .filter(|e| e.2 > 0.0)
                    .collect()
            })
            .collect()
    } else {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut sims: Vec<(usize, f64)> = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (j, metric.eval(x(i), x(j))))
                    .collect();
                let k = top_k.min(sims.len());
                let order = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
                if k < sims.len() {
                    sims.select_nth_unstable_by(k, order);
                    sims.truncate(k);
                }
                sims.into_iter()
                    .filter(|&(_, s)| s > 0.0)
                    .map(|(j, s)| (i.min(j), i.max(j), s))
                    .collect()
            })
            .collect()
    };
    let unique: BTreeMap<(usize, usize), f64> =
        rows.into_iter().flatten().map(|(a, b, w)| ((a, b), w)).collect();
    WeightedMatchGraph::from_edges(n, unique.into_iter().map(|((a, b), w)| (a, b, w)))
}

/// Maximum-weight matching of nodes by similarity; each matched pair is
/// split between the arms and unmatched nodes are Excluded.
pub fn plan_match(
    graph: &AttributedGraph,
    metric: SimilarityMetric,
    cutoff: usize,
    top_k: usize,
) -> Result<DesignPlan> {
    if !graph.has_features() {
        return Err(Error::MissingFeatures);
    }
    let n = graph.node_count();
    let candidates = match_candidates(graph, metric, cutoff, top_k)?;
    let matching = max_weight_matching(&candidates);
    let mut warnings = Vec::new();
    if n > cutoff {
        warnings.push(format!(
            "{n} nodes exceed the match cutoff {cutoff}; only each node's {top_k} most similar peers were candidates"
        ));
    }
    Ok(DesignPlan {
        method: Method::Match,
        clustering: Clustering::singletons(n),
        randomization: Randomization::ClusterPairs(matching.pairs().to_vec()),
        diagnostics: PlanDiagnostics {
            cluster_count: n,
            ..Default::default()
        },
        warnings,
    })
}

pub fn baseline_match(
    graph: &AttributedGraph,
    metric: SimilarityMetric,
    seed: u64,
) -> Result<DesignAssignment> {
    Ok(plan_match(graph, metric, DEFAULT_MATCH_CUTOFF, DEFAULT_MATCH_TOP_K)?.assign(seed))
}
