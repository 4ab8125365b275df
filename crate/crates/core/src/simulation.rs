//! Semi-synthetic binary outcomes with cross-arm spillover.
//!
//! Each assigned node first activates with its arm's base probability. One
//! synchronous spillover round then follows: under direct interference every
//! treated neighbor of an inactive control node gets an independent chance
//! to activate it; under contagion an inactive node with at least one active
//! neighbor in the other arm activates with a single draw. Excluded nodes
//! carry no outcome and never act as spillover sources.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Arm, AttributedGraph, NodeLabeling};
use crate::seed;

/// Probability that spillover happens across one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Default)]
pub enum SpilloverProbability {
    Fixed(f64),
    /// The edge's spillover weight.
    #[default]
    EdgeWeight,
}


impl fmt::Display for SpilloverProbability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpilloverProbability::Fixed(p) => write!(f, "{p}"),
            SpilloverProbability::EdgeWeight => f.write_str("edge-weight"),
        }
    }
}

impl FromStr for SpilloverProbability {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "edge-weight" {
            return Ok(SpilloverProbability::EdgeWeight);
        }
        s.parse::<f64>()
            .ok()
            .filter(|p| (0.0..=1.0).contains(p))
            .map(SpilloverProbability::Fixed)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "spillover probability '{s}' must be a number in [0, 1] or 'edge-weight'"
                ))
            })
    }
}

impl Serialize for SpilloverProbability {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SpilloverProbability::Fixed(p) => s.serialize_f64(*p),
            SpilloverProbability::EdgeWeight => s.serialize_str("edge-weight"),
        }
    }
}

impl<'de> Deserialize<'de> for SpilloverProbability {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(p) => Ok(SpilloverProbability::Fixed(p)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interference {
    Direct,
    #[default]
    Contagion,
    None,
}

impl Interference {
    pub fn as_str(self) -> &'static str {
        match self {
            Interference::Direct => "direct",
            Interference::Contagion => "contagion",
            Interference::None => "none",
        }
    }
}

impl fmt::Display for Interference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Interference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Interference::Direct),
            "contagion" => Ok(Interference::Contagion),
            "none" => Ok(Interference::None),
            other => Err(Error::InvalidArgument(format!(
                "unknown spillover '{other}' (expected direct, contagion or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutcomeConfig {
    pub p_treated: f64,
    pub p_control: f64,
    pub ep: SpilloverProbability,
    pub interference: Interference,
    pub runs: usize,
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        OutcomeConfig {
            p_treated: 0.4,
            p_control: 0.2,
            ep: SpilloverProbability::default(),
            interference: Interference::default(),
            runs: 10,
        }
    }
}

impl OutcomeConfig {
    /// The effect the construction plants: `p_treated - p_control`.
    pub fn true_tte(&self) -> f64 {
        self.p_treated - self.p_control
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_treated", self.p_treated), ("p_control", self.p_control)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if let SpilloverProbability::Fixed(p) = self.ep {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("ep = {p} is outside [0, 1]")));
            }
        }
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Activation of every node in one run; `None` for Excluded nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationOutcome {
    pub active: Vec<Option<bool>>,
    pub run: u64,
    pub seed: u64,
}

impl SimulationOutcome {
    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a == Some(true)).count()
    }
}

/// Base activations: Treated nodes with `p_treated`, Control nodes with
/// `p_control`, independently.
pub fn simulate_base(
    labeling: &NodeLabeling,
    cfg: &OutcomeConfig,
    seed: u64,
    run: u64,
) -> SimulationOutcome {
    let mut rng = seed::stream(seed, "outcome-base", run);
    let active = labeling
        .arms()
        .iter()
        .map(|arm| match arm {
            Arm::Treated => Some(rng.gen_bool(cfg.p_treated)),
            Arm::Control => Some(rng.gen_bool(cfg.p_control)),
            Arm::Excluded => None,
        })
        .collect();
    SimulationOutcome { active, run, seed }
}

fn edge_probability(graph: &AttributedGraph, ep: SpilloverProbability, edge: usize) -> f64 {
    match ep {
        SpilloverProbability::Fixed(p) => p,
        SpilloverProbability::EdgeWeight => graph.edge_weight(edge).unwrap_or(0.0),
    }
}

fn require_weights(graph: &AttributedGraph, ep: SpilloverProbability) -> Result<()> {
    if ep == SpilloverProbability::EdgeWeight && graph.edge_weights().is_none() {
        return Err(Error::MissingWeights);
    }
    Ok(())
}

/// Every treated neighbor of an inactive Control node independently
/// activates it with the edge's spillover probability.
pub fn apply_direct_interference(
    graph: &AttributedGraph,
    labeling: &NodeLabeling,
    outcome: &SimulationOutcome,
    cfg: &OutcomeConfig,
) -> Result<SimulationOutcome> {
    require_weights(graph, cfg.ep)?;
    let mut rng = seed::stream(outcome.seed, "outcome-direct", outcome.run);
    let mut active = outcome.active.clone();
    for v in 0..graph.node_count() {
        if labeling.arm(v) != Arm::Control || active[v] != Some(false) {
            continue;
        }
        for &(u, e) in graph.incident(v) {
            if labeling.arm(u) == Arm::Treated && rng.gen_bool(edge_probability(graph, cfg.ep, e))
            {
                active[v] = Some(true);
                break;
            }
        }
    }
    Ok(SimulationOutcome {
        active,
        ..outcome.clone()
    })
}

/// An inactive assigned node with at least one base-active neighbor in the
/// other arm activates with one draw. With edge-weight probabilities the
/// largest weight among those neighbors' edges is used.
pub fn apply_contagion(
    graph: &AttributedGraph,
    labeling: &NodeLabeling,
    outcome: &SimulationOutcome,
    cfg: &OutcomeConfig,
) -> Result<SimulationOutcome> {
    require_weights(graph, cfg.ep)?;
    let mut rng = seed::stream(outcome.seed, "outcome-contagion", outcome.run);
    let base = &outcome.active;
    let mut active = base.clone();
    for v in 0..graph.node_count() {
        let arm = labeling.arm(v);
        if !arm.is_assigned() || base[v] != Some(false) {
            continue;
        }
        let p = graph
            .incident(v)
            .iter()
            .filter(|&&(u, _)| labeling.arm(u) == arm.opposite() && base[u] == Some(true))
            .map(|&(_, e)| edge_probability(graph, cfg.ep, e))
            .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))));
        if let Some(p) = p {
            if rng.gen_bool(p) {
                active[v] = Some(true);
            }
        }
    }
    Ok(SimulationOutcome {
        active,
        ..outcome.clone()
    })
}

/// Base outcomes followed by the configured spillover round.
pub fn simulate(
    graph: &AttributedGraph,
    labeling: &NodeLabeling,
    cfg: &OutcomeConfig,
    seed: u64,
    run: u64,
) -> Result<SimulationOutcome> {
    cfg.validate()?;
    let base = simulate_base(labeling, cfg, seed, run);
    match cfg.interference {
        Interference::None => Ok(base),
        Interference::Direct => apply_direct_interference(graph, labeling, &base, cfg),
        Interference::Contagion => apply_contagion(graph, labeling, &base, cfg),
    }
}
