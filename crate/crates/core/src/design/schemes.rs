//! Node matching, cluster-pair weights and cluster-graph construction.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::Clustering;
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::matching::{max_weight_bipartite, WeightedMatchGraph};
use crate::seed;
use crate::similarity::{quantile, SimilarityMetric};

/// A similarity threshold: either a quartile level of an empirical
/// distribution (`0` meaning the threshold 0) or an absolute value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Quartile(u8),
    Absolute(f64),
}

impl Threshold {
    /// Resolves the threshold against the values it is a quantile of.
    pub fn resolve(self, values: &[f64]) -> Result<f64> {
        match self {
            Threshold::Absolute(t) => Ok(t),
            Threshold::Quartile(0) => Ok(0.0),
            Threshold::Quartile(q) if values.is_empty() => {
                log::debug!("quartile {q} of an empty distribution taken as 0");
                Ok(0.0)
            }
            Threshold::Quartile(q) => quantile(values, f64::from(q) / 4.0),
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            Threshold::Quartile(q) if q > 3 => Err(Error::InvalidArgument(format!(
                "quartile index {q} is outside 0..=3"
            ))),
            Threshold::Absolute(t) if !(t >= 0.0 && t.is_finite()) => Err(Error::InvalidArgument(
                format!("threshold {t} must be finite and non-negative"),
            )),
            _ => Ok(()),
        }
    }

    fn parse_suffix(s: &str) -> Option<Threshold> {
        if let Some(abs) = s.strip_prefix('@') {
            return abs.parse().ok().map(Threshold::Absolute);
        }
        match s {
            "0" => Some(Threshold::Quartile(0)),
            "1" => Some(Threshold::Quartile(1)),
            "2" => Some(Threshold::Quartile(2)),
            "3" => Some(Threshold::Quartile(3)),
            _ => None,
        }
    }

    fn suffix(self) -> String {
        match self {
            Threshold::Quartile(q) => q.to_string(),
            Threshold::Absolute(t) => format!("@{t}"),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

/// How cross-cluster node pairs are matched. Written `tnm0`..`tnm3` for the
/// quartile thresholds of all pairwise node similarities, `tnm@0.35` for an
/// absolute threshold, `bnm`, or `none` (only meaningful with weight `e`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeMatchScheme {
    None,
    Tnm(Threshold),
    Bnm,
}

impl Default for NodeMatchScheme {
    fn default() -> Self {
        NodeMatchScheme::Tnm(Threshold::Quartile(2))
    }
}

impl fmt::Display for NodeMatchScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeMatchScheme::None => f.write_str("none"),
            NodeMatchScheme::Tnm(t) => write!(f, "tnm{}", t.suffix()),
            NodeMatchScheme::Bnm => f.write_str("bnm"),
        }
    }
}

impl FromStr for NodeMatchScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parsed = match s {
            "none" => Some(NodeMatchScheme::None),
            "bnm" => Some(NodeMatchScheme::Bnm),
            _ => s
                .strip_prefix("tnm")
                .and_then(Threshold::parse_suffix)
                .map(NodeMatchScheme::Tnm),
        };
        parsed.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown node matching '{s}' (expected tnm0..tnm3, tnm@<alpha>, bnm or none)"
            ))
        })
    }
}

string_serde!(NodeMatchScheme);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ClusterWeightScheme {
    /// Similarity of the cluster mean vectors, `1 - ||m_i - m_j|| / sqrt(d)`.
    E,
    /// Number of node match records between the clusters.
    #[default]
    C,
    /// Mean similarity of the match records.
    S,
    /// Size of a maximum-weight one-to-one matching of the records.
    Mc,
    /// Mean similarity within that one-to-one matching.
    Ms,
    /// Total similarity of that one-to-one matching.
    Mss,
}

impl ClusterWeightScheme {
    pub const ALL: [ClusterWeightScheme; 6] = [
        ClusterWeightScheme::E,
        ClusterWeightScheme::C,
        ClusterWeightScheme::S,
        ClusterWeightScheme::Mc,
        ClusterWeightScheme::Ms,
        ClusterWeightScheme::Mss,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClusterWeightScheme::E => "e",
            ClusterWeightScheme::C => "c",
            ClusterWeightScheme::S => "s",
            ClusterWeightScheme::Mc => "mc",
            ClusterWeightScheme::Ms => "ms",
            ClusterWeightScheme::Mss => "mss",
        }
    }

    fn one_to_one(self) -> bool {
        matches!(
            self,
            ClusterWeightScheme::Mc | ClusterWeightScheme::Ms | ClusterWeightScheme::Mss
        )
    }
}

impl fmt::Display for ClusterWeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClusterWeightScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown cluster weight '{s}' (expected e, c, s, mc, ms or mss)"
                ))
            })
    }
}

string_serde!(ClusterWeightScheme);

/// How the cluster graph is built from cluster-pair weights. Written
/// `tcm0`..`tcm3` (quartiles of all pairwise cluster weights), `tcm@<beta>`
/// or `gcm`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterGraphScheme {
    Tcm(Threshold),
    Gcm,
}

impl Default for ClusterGraphScheme {
    fn default() -> Self {
        ClusterGraphScheme::Tcm(Threshold::Quartile(2))
    }
}

impl fmt::Display for ClusterGraphScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClusterGraphScheme::Tcm(t) => write!(f, "tcm{}", t.suffix()),
            ClusterGraphScheme::Gcm => f.write_str("gcm"),
        }
    }
}

impl FromStr for ClusterGraphScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parsed = if s == "gcm" {
            Some(ClusterGraphScheme::Gcm)
        } else {
            s.strip_prefix("tcm")
                .and_then(Threshold::parse_suffix)
                .map(ClusterGraphScheme::Tcm)
        };
        parsed.ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown cluster graph '{s}' (expected tcm0..tcm3, tcm@<beta> or gcm)"
            ))
        })
    }
}

string_serde!(ClusterGraphScheme);

/// Rejects scheme combinations that have no meaning.
pub fn validate_schemes(
    node_match: NodeMatchScheme,
    weight: ClusterWeightScheme,
    graph: ClusterGraphScheme,
) -> Result<()> {
    if let NodeMatchScheme::Tnm(t) = node_match {
        t.validate()?;
    }
    if let ClusterGraphScheme::Tcm(t) = graph {
        t.validate()?;
    }
    match (node_match, weight) {
        (NodeMatchScheme::Bnm, w) if w.one_to_one() => Err(Error::IncompatibleSchemes(format!(
            "cluster weight {w} needs one-to-one matching and cannot be combined with bnm"
        ))),
        (NodeMatchScheme::None, w) if w != ClusterWeightScheme::E => {
            Err(Error::IncompatibleSchemes(format!(
                "cluster weight {w} needs node matches; node matching 'none' only fits weight e"
            )))
        }
        _ => Ok(()),
    }
}

/// One node match. TNM records are unordered (`source < target`); BNM
/// records are directed from the matched node to its best partner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchRecord {
    pub source: usize,
    pub target: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NodeMatchSet {
    pub records: Vec<MatchRecord>,
}

/// Pairs above this count are subsampled when estimating similarity quantiles.
const EXACT_QUANTILE_PAIRS: usize = 1 << 22;
const QUANTILE_SAMPLE: usize = 1 << 20;

/// Similarities whose quantiles define TNM thresholds: every unordered node
/// pair, or a seeded uniform sample of pairs on large graphs.
pub fn similarity_distribution(
    graph: &AttributedGraph,
    metric: SimilarityMetric,
    seed: u64,
) -> Result<Vec<f64>> {
    if !graph.has_features() {
        return Err(Error::MissingFeatures);
    }
    let n = graph.node_count();
    let pairs = n * n.saturating_sub(1) / 2;
    if pairs <= EXACT_QUANTILE_PAIRS {
        return crate::similarity::pairwise_similarities(graph, metric);
    }
    let mut rng = seed::stream(seed, "similarity-sample", 0);
    Ok((0..QUANTILE_SAMPLE)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            metric.eval(graph.features(a).unwrap(), graph.features(b).unwrap())
        })
        .collect())
}

/// All cross-cluster node pairs with similarity strictly above `alpha`.
pub fn tnm(
    graph: &AttributedGraph,
    clustering: &Clustering,
    alpha: f64,
    metric: SimilarityMetric,
) -> Result<NodeMatchSet> {
    if !graph.has_features() {
        return Err(Error::MissingFeatures);
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("TNM threshold {alpha} is negative")));
    }
    let n = graph.node_count();
    let rows: Vec<Vec<MatchRecord>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let xk = graph.features(k).unwrap();
            let ck = clustering.cluster_of(k);
            ((k + 1)..n)
                .filter(|&l| clustering.cluster_of(l) != ck)
                .filter_map(|l| {
                    let s = metric.eval(xk, graph.features(l).unwrap());
                    (s > alpha).then_some(MatchRecord {
                        source: k,
                        target: l,
                        similarity: s,
                    })
                })
                .collect()
        })
        .collect();
    Ok(NodeMatchSet {
        records: rows.concat(),
    })
}

/// For every node, its most similar node in a different cluster (lowest
/// index on ties). Empty when there is a single cluster.
pub fn bnm(
    graph: &AttributedGraph,
    clustering: &Clustering,
    metric: SimilarityMetric,
) -> Result<NodeMatchSet> {
    if !graph.has_features() {
        return Err(Error::MissingFeatures);
    }
    let n = graph.node_count();
    let records = (0..n)
        .into_par_iter()
        .filter_map(|k| {
            let xk = graph.features(k).unwrap();
            let ck = clustering.cluster_of(k);
            let mut best: Option<(usize, f64)> = None;
            for l in (0..n).filter(|&l| clustering.cluster_of(l) != ck) {
                let s = metric.eval(xk, graph.features(l).unwrap());
                if best.is_none_or(|(_, bs)| s > bs) {
                    best = Some((l, s));
                }
            }
            best.map(|(l, s)| MatchRecord {
                source: k,
                target: l,
                similarity: s,
            })
        })
        .collect();
    Ok(NodeMatchSet { records })
}

/// Symmetric `g x g` cluster-pair weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterWeights {
    count: usize,
    values: Vec<f64>,
}

impl ClusterWeights {
    pub fn from_fn(count: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; count * count];
        for i in 0..count {
            for j in (i + 1)..count {
                let w = f(i, j);
                values[i * count + j] = w;
                values[j * count + i] = w;
            }
        }
        ClusterWeights { count, values }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.count + j]
    }

    /// Weights of all unordered pairs `i < j`, row-major.
    pub fn pair_values(&self) -> Vec<f64> {
        (0..self.count)
            .flat_map(|i| ((i + 1)..self.count).map(move |j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect()
    }
}

fn cluster_means(graph: &AttributedGraph, clustering: &Clustering) -> Result<Vec<Vec<f64>>> {
    let dim = graph.feature_dim().ok_or(Error::MissingFeatures)?;
    let mut sums = vec![vec![0.0; dim]; clustering.count()];
    for v in 0..graph.node_count() {
        let row = &mut sums[clustering.cluster_of(v)];
        for (s, x) in row.iter_mut().zip(graph.features(v).unwrap()) {
            *s += x;
        }
    }
    for (row, size) in sums.iter_mut().zip(clustering.sizes()) {
        for s in row.iter_mut() {
            *s /= size as f64;
        }
    }
    Ok(sums)
}

/// Euclidean distance between cluster mean vectors, used by weight `e` and
/// by the stratified baselines.
pub(crate) fn mean_distance_matrix(
    graph: &AttributedGraph,
    clustering: &Clustering,
) -> Result<ClusterWeights> {
    let means = cluster_means(graph, clustering)?;
    Ok(ClusterWeights::from_fn(clustering.count(), |i, j| {
        means[i]
            .iter()
            .zip(&means[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }))
}

/// Weight of one cluster pair from the records between them.
fn weight_from_records(scheme: ClusterWeightScheme, records: &[MatchRecord]) -> Result<f64> {
    if records.is_empty() {
        return Ok(0.0);
    }
    Ok(match scheme {
        ClusterWeightScheme::E => unreachable!("weight e does not use node matches"),
        ClusterWeightScheme::C => records.len() as f64,
        ClusterWeightScheme::S => {
            records.iter().map(|r| r.similarity).sum::<f64>() / records.len() as f64
        }
        _ => {
            let selected = one_to_one(records)?;
            let total: f64 = selected.iter().sum();
            match scheme {
                ClusterWeightScheme::Mc => selected.len() as f64,
                ClusterWeightScheme::Ms if selected.is_empty() => 0.0,
                ClusterWeightScheme::Ms => total / selected.len() as f64,
                _ => total,
            }
        }
    })
}

/// Similarities of the pairs selected by a maximum-weight bipartite matching
/// over the records (sources on one side, targets on the other).
fn one_to_one(records: &[MatchRecord]) -> Result<Vec<f64>> {
    let mut rows = HashMap::new();
    let mut cols = HashMap::new();
    for r in records {
        let next = rows.len();
        rows.entry(r.source).or_insert(next);
        let next = cols.len();
        cols.entry(r.target).or_insert(next);
    }
    let mut w = vec![vec![0.0; cols.len()]; rows.len()];
    for r in records {
        w[rows[&r.source]][cols[&r.target]] = r.similarity;
    }
    let pairs = max_weight_bipartite(&w)?;
    Ok(pairs.into_iter().map(|(a, b)| w[a][b]).collect())
}

/// Orients records so that each one runs from the lower-numbered cluster to
/// the higher one, and groups them by cluster pair.
fn group_records(
    clustering: &Clustering,
    matches: &NodeMatchSet,
) -> HashMap<(usize, usize), Vec<MatchRecord>> {
    let mut groups: HashMap<(usize, usize), Vec<MatchRecord>> = HashMap::new();
    for r in &matches.records {
        let (cs, ct) = (clustering.cluster_of(r.source), clustering.cluster_of(r.target));
        let oriented = if cs < ct {
            *r
        } else {
            MatchRecord {
                source: r.target,
                target: r.source,
                similarity: r.similarity,
            }
        };
        groups.entry((cs.min(ct), cs.max(ct))).or_default().push(oriented);
    }
    groups
}

/// Weight of a single cluster pair `(ci, cj)`.
pub fn cluster_weight(
    ci: usize,
    cj: usize,
    matches: &NodeMatchSet,
    scheme: ClusterWeightScheme,
    graph: &AttributedGraph,
    clustering: &Clustering,
) -> Result<f64> {
    if ci == cj {
        return Err(Error::InvalidArgument("cluster weight needs two distinct clusters".into()));
    }
    if scheme == ClusterWeightScheme::E {
        let d = mean_distance_matrix(graph, clustering)?.get(ci, cj);
        return Ok(distance_to_similarity(d, graph));
    }
    let key = (ci.min(cj), ci.max(cj));
    let groups = group_records(clustering, matches);
    weight_from_records(scheme, groups.get(&key).map_or(&[], Vec::as_slice))
}

fn distance_to_similarity(d: f64, graph: &AttributedGraph) -> f64 {
    let dim = graph.feature_dim().unwrap_or(1) as f64;
    (1.0 - d / dim.sqrt()).clamp(0.0, 1.0)
}

/// Weights of all cluster pairs. Pairs without match records weigh 0
/// except under scheme `e`, which ignores the matches.
pub fn cluster_weights(
    graph: &AttributedGraph,
    clustering: &Clustering,
    matches: &NodeMatchSet,
    scheme: ClusterWeightScheme,
) -> Result<ClusterWeights> {
    let g = clustering.count();
    if scheme == ClusterWeightScheme::E {
        let dist = mean_distance_matrix(graph, clustering)?;
        return Ok(ClusterWeights::from_fn(g, |i, j| {
            distance_to_similarity(dist.get(i, j), graph)
        }));
    }
    let groups = group_records(clustering, matches);
    let mut keyed: Vec<(&(usize, usize), &Vec<MatchRecord>)> = groups.iter().collect();
    keyed.sort_unstable_by_key(|(k, _)| **k);
    let computed: Vec<((usize, usize), f64)> = keyed
        .into_par_iter()
        .map(|(k, recs)| weight_from_records(scheme, recs).map(|w| (*k, w)))
        .collect::<Result<_>>()?;
    let lookup: HashMap<(usize, usize), f64> = computed.into_iter().collect();
    Ok(ClusterWeights::from_fn(g, |i, j| {
        lookup.get(&(i, j)).copied().unwrap_or(0.0)
    }))
}

/// The cluster graph, with the TCM threshold that was applied (if any).
#[derive(Debug, Clone)]
pub struct ClusterGraph {
    pub graph: WeightedMatchGraph,
    pub beta: Option<f64>,
}

pub fn build_cluster_graph(
    weights: &ClusterWeights,
    scheme: ClusterGraphScheme,
) -> Result<ClusterGraph> {
    let g = weights.count();
    let mut graph = WeightedMatchGraph::new(g);
    match scheme {
        ClusterGraphScheme::Tcm(t) => {
            t.validate()?;
            let beta = t.resolve(&weights.pair_values())?;
            for i in 0..g {
                for j in (i + 1)..g {
                    let w = weights.get(i, j);
                    if w > beta {
                        graph.add_edge(i, j, w)?;
                    }
                }
            }
            Ok(ClusterGraph {
                graph,
                beta: Some(beta),
            })
        }
        ClusterGraphScheme::Gcm => {
            let mut chosen = std::collections::BTreeSet::new();
            for i in 0..g {
                let mut best: Option<(usize, f64)> = None;
                for j in (0..g).filter(|&j| j != i) {
                    let w = weights.get(i, j);
                    if best.is_none_or(|(_, bw)| w > bw) {
                        best = Some((j, w));
                    }
                }
                if let Some((j, w)) = best.filter(|&(_, w)| w > 0.0) {
                    chosen.insert((i.min(j), i.max(j), w.to_bits()));
                }
            }
            for (i, j, w) in chosen {
                graph.add_edge(i, j, f64::from_bits(w))?;
            }
            Ok(ClusterGraph { graph, beta: None })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_strings_round_trip() {
        for s in ["none", "bnm", "tnm0", "tnm3", "tnm@0.25"] {
            assert_eq!(s.parse::<NodeMatchScheme>().unwrap().to_string(), s);
        }
        for s in ["gcm", "tcm1", "tcm@2"] {
            assert_eq!(s.parse::<ClusterGraphScheme>().unwrap().to_string(), s);
        }
        assert!("tnm4".parse::<NodeMatchScheme>().is_err());
        assert!("x".parse::<ClusterWeightScheme>().is_err());
    }

    #[test]
    fn incompatible_combinations() {
        let graph = ClusterGraphScheme::Gcm;
        for w in [ClusterWeightScheme::Mc, ClusterWeightScheme::Ms, ClusterWeightScheme::Mss] {
            assert!(matches!(
                validate_schemes(NodeMatchScheme::Bnm, w, graph),
                Err(Error::IncompatibleSchemes(_))
            ));
        }
        assert!(validate_schemes(NodeMatchScheme::Bnm, ClusterWeightScheme::S, graph).is_ok());
        assert!(validate_schemes(NodeMatchScheme::None, ClusterWeightScheme::C, graph).is_err());
        assert!(validate_schemes(NodeMatchScheme::None, ClusterWeightScheme::E, graph).is_ok());
    }

    #[test]
    fn weights_from_two_by_two_records() {
        // a=0, b=1 in one cluster; x=2, y=3 in the other
        let r = |s, t, sim| MatchRecord {
            source: s,
            target: t,
            similarity: sim,
        };
        let recs = [r(0, 2, 0.9), r(0, 3, 0.8), r(1, 3, 0.7)];
        let w = |s| weight_from_records(s, &recs).unwrap();
        assert_eq!(w(ClusterWeightScheme::C), 3.0);
        assert!((w(ClusterWeightScheme::S) - 0.8).abs() < 1e-12);
        assert_eq!(w(ClusterWeightScheme::Mc), 2.0);
        assert!((w(ClusterWeightScheme::Ms) - 0.8).abs() < 1e-12);
        assert!((w(ClusterWeightScheme::Mss) - 1.6).abs() < 1e-12);
        assert_eq!(weight_from_records(ClusterWeightScheme::C, &[]).unwrap(), 0.0);
    }

    #[test]
    fn gcm_union_of_argmax() {
        let w = ClusterWeights::from_fn(3, |i, j| match (i, j) {
            (0, 1) => 5.0,
            (0, 2) => 2.0,
            _ => 1.0,
        });
        let cg = build_cluster_graph(&w, ClusterGraphScheme::Gcm).unwrap();
        let edges: Vec<_> = cg.graph.edges().iter().map(|&(a, b, _)| (a, b)).collect();
        assert_eq!(edges, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn tcm_thresholds() {
        let w = ClusterWeights::from_fn(3, |i, j| (i + j) as f64);
        let all = build_cluster_graph(&w, ClusterGraphScheme::Tcm(Threshold::Quartile(0))).unwrap();
        assert_eq!(all.graph.edges().len(), 3);
        let none = build_cluster_graph(&w, ClusterGraphScheme::Tcm(Threshold::Absolute(3.0))).unwrap();
        assert!(none.graph.edges().is_empty());
    }
}
