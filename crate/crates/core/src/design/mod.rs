//! Treatment assignment designs: CMatch (cluster the graph, match clusters
//! with similar covariates, split each matched pair between the arms) and the
//! randomized, cluster-stratified (CR, CBR) and node-matching baselines.
//!
//! A design is computed in two steps. [`plan`] does the deterministic,
//! expensive part (clustering, matching) once; [`DesignPlan::assign`] draws
//! the random arm flips and can be called once per simulation run.

mod baselines;
mod schemes;

use std::borrow::Cow;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::clustering::{ClustererConfig, Clustering};
use crate::error::{Error, Result};
use crate::graph::{Arm, AttributedGraph, IdMap, NodeLabeling};
use crate::matching::max_weight_matching;
use crate::seed;
use crate::similarity::{annotate_edge_spillover, SimilarityMetric};

pub use baselines::{
    baseline_cbr, baseline_cr, baseline_match, baseline_randomized, greedy_strata,
    plan_cbr, plan_cr, plan_match, plan_randomized, DEFAULT_MATCH_CUTOFF, DEFAULT_MATCH_TOP_K,
};
pub use schemes::{
    bnm, build_cluster_graph, cluster_weight, cluster_weights, similarity_distribution, tnm,
    validate_schemes, ClusterGraph, ClusterGraphScheme, ClusterWeightScheme, ClusterWeights,
    MatchRecord, NodeMatchScheme, NodeMatchSet, Threshold,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Cmatch,
    Randomized,
    Cr,
    Cbr,
    Match,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Cmatch,
        Method::Randomized,
        Method::Cr,
        Method::Cbr,
        Method::Match,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cmatch => "cmatch",
            Method::Randomized => "randomized",
            Method::Cr => "cr",
            Method::Cbr => "cbr",
            Method::Match => "match",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown method '{s}' (expected cmatch, randomized, cr, cbr or match)"
            ))
        })
    }
}

/// Everything needed to build a design. Fields irrelevant to the chosen
/// method are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub method: Method,
    pub clusterer: ClustererConfig,
    pub node_match: NodeMatchScheme,
    pub cluster_weight: ClusterWeightScheme,
    pub cluster_graph: ClusterGraphScheme,
    /// Above this node count the match baseline only considers each node's
    /// `match_top_k` most similar peers.
    pub match_cutoff: usize,
    pub match_top_k: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            method: Method::Cmatch,
            clusterer: ClustererConfig::default(),
            node_match: NodeMatchScheme::default(),
            cluster_weight: ClusterWeightScheme::default(),
            cluster_graph: ClusterGraphScheme::default(),
            match_cutoff: DEFAULT_MATCH_CUTOFF,
            match_top_k: DEFAULT_MATCH_TOP_K,
        }
    }
}

impl DesignConfig {
    /// Checks the configuration without touching any graph.
    pub fn validate(&self) -> Result<()> {
        if self.method == Method::Cmatch {
            validate_schemes(self.node_match, self.cluster_weight, self.cluster_graph)?;
        }
        if matches!(self.method, Method::Cmatch | Method::Cr | Method::Cbr) {
            match &self.clusterer {
                ClustererConfig::Mcl(p) => p.validate()?,
                ClustererConfig::Reldg { clusters: 0, .. } => {
                    return Err(Error::InvalidArgument("reLDG needs clusters >= 1".into()))
                }
                ClustererConfig::Reldg { .. } => {}
            }
        }
        if self.method == Method::Match && self.match_top_k == 0 {
            return Err(Error::InvalidArgument("match_top_k must be positive".into()));
        }
        Ok(())
    }
}

/// How arms are drawn once the structure of a design is fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum Randomization {
    /// A fair coin for every node.
    Nodes,
    /// Each pair `(a, b)` of clusters gets one Treated and one Control member
    /// at random; clusters outside every pair are Excluded.
    ClusterPairs(Vec<(usize, usize)>),
}

/// Intermediate quantities reported alongside the metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlanDiagnostics {
    pub cluster_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_match_records: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_graph_edges: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strata: Option<usize>,
}

/// The deterministic part of a design.
#[derive(Debug, Clone)]
pub struct DesignPlan {
    pub method: Method,
    pub clustering: Clustering,
    pub randomization: Randomization,
    pub diagnostics: PlanDiagnostics,
    pub warnings: Vec<String>,
}

/// A matched cluster pair after the coin flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MatchedPair {
    pub treated: usize,
    pub control: usize,
}

/// A concrete treatment assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignAssignment {
    pub labeling: NodeLabeling,
    pub clustering: Clustering,
    pub matched_cluster_pairs: Vec<MatchedPair>,
    pub method: Method,
    pub seed: u64,
}

impl DesignPlan {
    /// Draws arms. Different seeds give independent draws over the same
    /// structure.
    pub fn assign(&self, seed: u64) -> DesignAssignment {
        let n = self.clustering.node_count();
        let mut rng = seed::stream(seed, "assign", 0);
        let (labeling, pairs) = match &self.randomization {
            Randomization::Nodes => {
                let arms = (0..n)
                    .map(|_| if rng.gen::<bool>() { Arm::Treated } else { Arm::Control })
                    .collect();
                (NodeLabeling::new(arms), Vec::new())
            }
            Randomization::ClusterPairs(pairs) => {
                let mut cluster_arm = vec![Arm::Excluded; self.clustering.count()];
                let flipped: Vec<MatchedPair> = pairs
                    .iter()
                    .map(|&(a, b)| {
                        let (treated, control) = if rng.gen::<bool>() { (a, b) } else { (b, a) };
                        cluster_arm[treated] = Arm::Treated;
                        cluster_arm[control] = Arm::Control;
                        MatchedPair { treated, control }
                    })
                    .collect();
                let arms = self
                    .clustering
                    .assignment()
                    .iter()
                    .map(|&c| cluster_arm[c])
                    .collect();
                (NodeLabeling::new(arms), flipped)
            }
        };
        DesignAssignment {
            labeling,
            clustering: self.clustering.clone(),
            matched_cluster_pairs: pairs,
            method: self.method,
            seed,
        }
    }
}

/// Uses the graph's edge weights when present; otherwise annotates edges with
/// endpoint similarity under `metric` (requires features).
pub(crate) fn with_spillover<'g>(
    graph: &'g AttributedGraph,
    metric: SimilarityMetric,
) -> Result<Cow<'g, AttributedGraph>> {
    if graph.edge_weights().is_some() || !graph.has_features() {
        Ok(Cow::Borrowed(graph))
    } else {
        Ok(Cow::Owned(annotate_edge_spillover(graph.clone(), metric)?))
    }
}

/// Builds the deterministic part of the configured design.
pub fn plan(
    graph: &AttributedGraph,
    config: &DesignConfig,
    metric: SimilarityMetric,
    seed: u64,
) -> Result<DesignPlan> {
    config.validate()?;
    match config.method {
        Method::Cmatch => plan_cmatch(
            graph,
            &config.clusterer,
            metric,
            config.node_match,
            config.cluster_weight,
            config.cluster_graph,
            seed,
        ),
        Method::Randomized => Ok(plan_randomized(graph)),
        Method::Cr => plan_cr(graph, &config.clusterer, metric, seed),
        Method::Cbr => plan_cbr(graph, &config.clusterer, metric, seed),
        Method::Match => plan_match(graph, metric, config.match_cutoff, config.match_top_k),
    }
}

/// The CMatch pipeline up to the cluster matching.
pub fn plan_cmatch(
    graph: &AttributedGraph,
    clusterer: &ClustererConfig,
    metric: SimilarityMetric,
    node_match: NodeMatchScheme,
    weight: ClusterWeightScheme,
    cluster_graph: ClusterGraphScheme,
    seed: u64,
) -> Result<DesignPlan> {
    validate_schemes(node_match, weight, cluster_graph)?;
    if !graph.has_features() {
        return Err(Error::MissingFeatures);
    }
    let weighted = with_spillover(graph, metric)?;
    let clustering = clusterer.cluster(&weighted, seed::derive_seed(seed, "cluster", 0))?;
    let mut diagnostics = PlanDiagnostics {
        cluster_count: clustering.count(),
        ..Default::default()
    };
    let mut warnings = Vec::new();

    if clustering.count() < 2 {
        warnings.push(format!(
            "clustering produced {} cluster(s); nothing to match, every node is excluded",
            clustering.count()
        ));
        return Ok(DesignPlan {
            method: Method::Cmatch,
            clustering,
            randomization: Randomization::ClusterPairs(Vec::new()),
            diagnostics,
            warnings,
        });
    }

    // weight e only looks at cluster means, so node matches are not needed
    let matches = match (weight, node_match) {
        (ClusterWeightScheme::E, _) | (_, NodeMatchScheme::None) => NodeMatchSet::default(),
        (_, NodeMatchScheme::Tnm(t)) => {
            let alpha = match t {
                Threshold::Quartile(q) if q > 0 => {
                    let dist = similarity_distribution(
                        graph,
                        metric,
                        seed::derive_seed(seed, "similarity", 0),
                    )?;
                    t.resolve(&dist)?
                }
                _ => t.resolve(&[])?,
            };
            diagnostics.alpha = Some(alpha);
            tnm(graph, &clustering, alpha, metric)?
        }
        (_, NodeMatchScheme::Bnm) => bnm(graph, &clustering, metric)?,
    };
    if weight != ClusterWeightScheme::E {
        diagnostics.node_match_records = Some(matches.records.len());
    }

    let weights = cluster_weights(graph, &clustering, &matches, weight)?;
    let cg = build_cluster_graph(&weights, cluster_graph)?;
    diagnostics.beta = cg.beta;
    diagnostics.cluster_graph_edges = Some(cg.graph.edges().len());
    let matching = max_weight_matching(&cg.graph);
    if matching.is_empty() {
        warnings.push("cluster graph has no usable edges; every node is excluded".into());
    }
    Ok(DesignPlan {
        method: Method::Cmatch,
        clustering,
        randomization: Randomization::ClusterPairs(matching.pairs().to_vec()),
        diagnostics,
        warnings,
    })
}

/// Runs the full CMatch pipeline and draws one assignment.
pub fn cmatch(
    graph: &AttributedGraph,
    clusterer: &ClustererConfig,
    metric: SimilarityMetric,
    node_match: NodeMatchScheme,
    weight: ClusterWeightScheme,
    cluster_graph: ClusterGraphScheme,
    seed: u64,
) -> Result<DesignAssignment> {
    let plan = plan_cmatch(graph, clusterer, metric, node_match, weight, cluster_graph, seed)?;
    for w in &plan.warnings {
        log::warn!("{w}");
    }
    Ok(plan.assign(seed))
}

/// Serializes `node_id,cluster_id,arm` rows, preceded by optional `#`
/// comment lines.
pub fn assignment_csv(assignment: &DesignAssignment, ids: &IdMap, comments: &[String]) -> Vec<u8> {
    let mut out = Vec::new();
    for c in comments {
        out.extend_from_slice(format!("# {c}\n").as_bytes());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node_id", "cluster_id", "arm"]).expect("write to memory");
    for (node, arm) in assignment.labeling.arms().iter().enumerate() {
        let cluster = assignment.clustering.cluster_of(node).to_string();
        w.write_record([ids.id(node), cluster.as_str(), arm.as_str()])
            .expect("write to memory");
    }
    w.into_inner().expect("flush to memory")
}

/// Reads an assignment CSV written by [`assignment_csv`]. Every node of
/// `ids` must appear exactly once.
pub fn read_assignment_csv(path: &Path, ids: &IdMap) -> Result<(NodeLabeling, Clustering)> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column '{name}'")))
    };
    let (id_col, cluster_col, arm_col) = (col("node_id")?, col("cluster_id")?, col("arm")?);
    let n = ids.len();
    let mut arms: Vec<Option<Arm>> = vec![None; n];
    let mut clusters = vec![0usize; n];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let id = &record[id_col];
        let node = ids
            .index(id)
            .ok_or_else(|| Error::parse(path, line, format!("unknown node id '{id}'")))?;
        if arms[node].is_some() {
            return Err(Error::parse(path, line, format!("node '{id}' listed twice")));
        }
        arms[node] = Some(record[arm_col].parse().map_err(|e: Error| {
            Error::parse(path, line, e.to_string())
        })?);
        clusters[node] = record[cluster_col]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad cluster id '{}'", &record[cluster_col])))?;
    }
    if let Some(missing) = arms.iter().position(Option::is_none) {
        return Err(Error::parse(
            path,
            0,
            format!("node '{}' has no assignment", ids.id(missing)),
        ));
    }
    Ok((
        NodeLabeling::new(arms.into_iter().map(Option::unwrap).collect()),
        Clustering::from_labels(&clusters),
    ))
}
