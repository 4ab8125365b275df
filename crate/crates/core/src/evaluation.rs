//! Effect estimation and design-quality metrics.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Arm, AttributedGraph, NodeLabeling};
use crate::simulation::SimulationOutcome;

/// Difference in mean activation between Treated and Control nodes.
pub fn estimate_tte(labeling: &NodeLabeling, outcome: &SimulationOutcome) -> Result<f64> {
    let mut sums = [0usize; 2];
    let mut counts = [0usize; 2];
    for (arm, active) in labeling.arms().iter().zip(&outcome.active) {
        let slot = match arm {
            Arm::Treated => 0,
            Arm::Control => 1,
            Arm::Excluded => continue,
        };
        counts[slot] += 1;
        sums[slot] += usize::from(*active == Some(true));
    }
    if counts[0] == 0 {
        return Err(Error::EmptyArm { arm: "treated" });
    }
    if counts[1] == 0 {
        return Err(Error::EmptyArm { arm: "control" });
    }
    Ok(sums[0] as f64 / counts[0] as f64 - sums[1] as f64 / counts[1] as f64)
}

pub fn rmse(estimates: &[f64], true_tte: f64) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput("rmse of no estimates"));
    }
    let mse = estimates.iter().map(|e| (e - true_tte).powi(2)).sum::<f64>() / estimates.len() as f64;
    Ok(mse.sqrt())
}

/// Euclidean distance between the mean feature vectors of the two arms.
pub fn covariate_distance(graph: &AttributedGraph, labeling: &NodeLabeling) -> Result<f64> {
    let dim = graph.feature_dim().ok_or(Error::MissingFeatures)?;
    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    let mut counts = [0usize; 2];
    for v in 0..graph.node_count() {
        let slot = match labeling.arm(v) {
            Arm::Treated => 0,
            Arm::Control => 1,
            Arm::Excluded => continue,
        };
        counts[slot] += 1;
        for (s, x) in sums[slot].iter_mut().zip(graph.features(v).unwrap()) {
            *s += x;
        }
    }
    if counts[0] == 0 {
        return Err(Error::EmptyArm { arm: "treated" });
    }
    if counts[1] == 0 {
        return Err(Error::EmptyArm { arm: "control" });
    }
    let sq: f64 = sums[0]
        .iter()
        .zip(&sums[1])
        .map(|(t, c)| (t / counts[0] as f64 - c / counts[1] as f64).powi(2))
        .sum();
    Ok(sq.sqrt())
}

/// Which edges form the denominator of the cut fractions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutDenominator {
    /// Every edge of the graph, including those touching Excluded nodes.
    #[default]
    All,
    /// Only edges with both endpoints assigned to an arm.
    Assigned,
}

impl FromStr for CutDenominator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(CutDenominator::All),
            "assigned" => Ok(CutDenominator::Assigned),
            other => Err(Error::InvalidArgument(format!(
                "unknown cut denominator '{other}' (expected all or assigned)"
            ))),
        }
    }
}

/// Edge counts by the arms of their endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EdgeCensus {
    pub crossing: usize,
    pub within: usize,
    pub touching_excluded: usize,
    pub crossing_weight: f64,
    pub within_weight: f64,
    pub excluded_weight: f64,
}

pub fn edge_census(graph: &AttributedGraph, labeling: &NodeLabeling) -> EdgeCensus {
    let mut c = EdgeCensus::default();
    for (e, &(a, b)) in graph.edges().iter().enumerate() {
        let w = graph.edge_weight(e).unwrap_or(0.0);
        let (x, y) = (labeling.arm(a), labeling.arm(b));
        if !x.is_assigned() || !y.is_assigned() {
            c.touching_excluded += 1;
            c.excluded_weight += w;
        } else if x != y {
            c.crossing += 1;
            c.crossing_weight += w;
        } else {
            c.within += 1;
            c.within_weight += w;
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutMetrics {
    pub edge_fraction: f64,
    /// `None` when the graph has no edge weights.
    pub weight_fraction: Option<f64>,
}

/// Share of edges (and of edge weight) between a Treated and a Control node.
pub fn cut_metrics(
    graph: &AttributedGraph,
    labeling: &NodeLabeling,
    denominator: CutDenominator,
) -> Result<CutMetrics> {
    if graph.edge_count() == 0 {
        return Err(Error::NoEdges);
    }
    let c = edge_census(graph, labeling);
    let (edges, weight) = match denominator {
        CutDenominator::All => (
            graph.edge_count(),
            c.crossing_weight + c.within_weight + c.excluded_weight,
        ),
        CutDenominator::Assigned => (c.crossing + c.within, c.crossing_weight + c.within_weight),
    };
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Ok(CutMetrics {
        edge_fraction: ratio(c.crossing as f64, edges as f64),
        weight_fraction: graph
            .edge_weights()
            .map(|_| ratio(c.crossing_weight, weight)),
    })
}

/// Total spillover weight of the edges between the arms.
pub fn theta_hat(graph: &AttributedGraph, labeling: &NodeLabeling) -> Result<f64> {
    if graph.edge_weights().is_none() {
        return Err(Error::MissingWeights);
    }
    Ok(edge_census(graph, labeling).crossing_weight)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregate metrics over the runs of one design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub method: String,
    pub runs: usize,
    pub true_tte: f64,
    pub mean_estimate: f64,
    pub rmse: f64,
    /// RMSE of the same assignments simulated without spillover, the part of
    /// the error due to finite-sample noise alone.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_floor_rmse: Option<f64>,
    pub covariate_distance: f64,
    pub covariate_distance_std: f64,
    pub crossing_edge_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossing_weight_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_hat: Option<f64>,
    pub kept_node_count: usize,
    pub treated_count: usize,
    pub control_count: usize,
    pub excluded_count: usize,
    pub estimates: Vec<f64>,
}

/// One simulated run: the assignment drawn for it and its outcome.
pub struct RunRecord<'a> {
    pub labeling: &'a NodeLabeling,
    pub outcome: &'a SimulationOutcome,
}

/// Evaluates every run. Arm counts and the cut metrics are averaged over
/// runs, since each run may draw a different assignment.
pub fn evaluate_runs(
    graph: &AttributedGraph,
    method: &str,
    runs: &[RunRecord<'_>],
    true_tte: f64,
    denominator: CutDenominator,
) -> Result<MetricsReport> {
    if runs.is_empty() {
        return Err(Error::EmptyInput("no runs to evaluate"));
    }
    let mut estimates = Vec::with_capacity(runs.len());
    let mut distances = Vec::with_capacity(runs.len());
    let mut edge_fractions = Vec::with_capacity(runs.len());
    let mut weight_fractions = Vec::with_capacity(runs.len());
    let mut thetas = Vec::with_capacity(runs.len());
    for r in runs {
        estimates.push(estimate_tte(r.labeling, r.outcome)?);
        if graph.has_features() {
            distances.push(covariate_distance(graph, r.labeling)?);
        }
        if graph.edge_count() > 0 {
            let cut = cut_metrics(graph, r.labeling, denominator)?;
            edge_fractions.push(cut.edge_fraction);
            if let Some(w) = cut.weight_fraction {
                weight_fractions.push(w);
                thetas.push(theta_hat(graph, r.labeling)?);
            }
        }
    }
    let mean = |v: &[f64]| mean_std(v).0;
    let optional = |v: &[f64]| (!v.is_empty()).then(|| mean(v));
    let (cd, cd_std) = if distances.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        mean_std(&distances)
    };
    let first = runs[0].labeling;
    Ok(MetricsReport {
        method: method.to_string(),
        runs: runs.len(),
        true_tte,
        mean_estimate: mean(&estimates),
        rmse: rmse(&estimates, true_tte)?,
        noise_floor_rmse: None,
        covariate_distance: cd,
        covariate_distance_std: cd_std,
        crossing_edge_fraction: if edge_fractions.is_empty() { 0.0 } else { mean(&edge_fractions) },
        crossing_weight_fraction: optional(&weight_fractions),
        theta_hat: optional(&thetas),
        kept_node_count: first.kept_count(),
        treated_count: first.count(Arm::Treated),
        control_count: first.count(Arm::Control),
        excluded_count: first.count(Arm::Excluded),
        estimates,
    })
}

impl MetricsReport {
    pub const CSV_COLUMNS: [&'static str; 15] = [
        "method",
        "runs",
        "true_tte",
        "mean_estimate",
        "rmse",
        "noise_floor_rmse",
        "covariate_distance",
        "covariate_distance_std",
        "crossing_edge_fraction",
        "crossing_weight_fraction",
        "theta_hat",
        "kept_node_count",
        "treated_count",
        "control_count",
        "excluded_count",
    ];

    /// Values in [`Self::CSV_COLUMNS`] order; absent values are empty.
    pub fn csv_fields(&self) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        vec![
            self.method.clone(),
            self.runs.to_string(),
            self.true_tte.to_string(),
            self.mean_estimate.to_string(),
            self.rmse.to_string(),
            opt(self.noise_floor_rmse),
            self.covariate_distance.to_string(),
            self.covariate_distance_std.to_string(),
            self.crossing_edge_fraction.to_string(),
            opt(self.crossing_weight_fraction),
            opt(self.theta_hat),
            self.kept_node_count.to_string(),
            self.treated_count.to_string(),
            self.control_count.to_string(),
            self.excluded_count.to_string(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn outcome(active: Vec<Option<bool>>) -> SimulationOutcome {
        SimulationOutcome {
            active,
            run: 0,
            seed: 0,
        }
    }

    #[test]
    fn tte_arithmetic() {
        use Arm::*;
        let l = NodeLabeling::new(vec![Treated, Treated, Treated, Control, Control, Control, Control]);
        let o = outcome(
            [true, true, false, true, false, false, false].map(Some).to_vec(),
        );
        assert!((estimate_tte(&l, &o).unwrap() - 5.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn tte_empty_arm() {
        let l = NodeLabeling::new(vec![Arm::Treated, Arm::Excluded]);
        let o = outcome(vec![Some(true), None]);
        assert!(matches!(estimate_tte(&l, &o), Err(Error::EmptyArm { arm: "control" })));
    }

    #[test]
    fn rmse_values() {
        assert!((rmse(&[0.3, 0.1], 0.2).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(rmse(&[0.2, 0.2], 0.2).unwrap(), 0.0);
        assert!((rmse(&[0.7], 0.2).unwrap() - 0.5).abs() < 1e-15);
        assert!(rmse(&[], 0.2).is_err());
    }

    #[test]
    fn covariate_distance_unit() {
        let g = AttributedGraph::from_edges(2, [])
            .unwrap()
            .with_features(vec![vec![1.0, 0.0], vec![0.0, 0.0]])
            .unwrap();
        let l = NodeLabeling::new(vec![Arm::Treated, Arm::Control]);
        assert_eq!(covariate_distance(&g, &l).unwrap(), 1.0);
    }

    #[test]
    fn cut_fractions() {
        let g = AttributedGraph::from_edges(2, [(0, 1)])
            .unwrap()
            .with_edge_weights(vec![0.3])
            .unwrap();
        let opposite = NodeLabeling::new(vec![Arm::Treated, Arm::Control]);
        let c = cut_metrics(&g, &opposite, CutDenominator::All).unwrap();
        assert_eq!((c.edge_fraction, c.weight_fraction), (1.0, Some(1.0)));
        assert_eq!(theta_hat(&g, &opposite).unwrap(), 0.3);
        let same = NodeLabeling::all(2, Arm::Treated);
        let c = cut_metrics(&g, &same, CutDenominator::All).unwrap();
        assert_eq!((c.edge_fraction, c.weight_fraction), (0.0, Some(0.0)));
        let empty = AttributedGraph::from_edges(2, []).unwrap();
        assert!(matches!(cut_metrics(&empty, &same, CutDenominator::All), Err(Error::NoEdges)));
    }

    #[test]
    fn denominators_differ_with_exclusion() {
        let g = AttributedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let l = NodeLabeling::new(vec![Arm::Treated, Arm::Control, Arm::Excluded]);
        assert_eq!(cut_metrics(&g, &l, CutDenominator::All).unwrap().edge_fraction, 0.5);
        assert_eq!(cut_metrics(&g, &l, CutDenominator::Assigned).unwrap().edge_fraction, 1.0);
    }

    proptest! {
        #[test]
        fn census_partitions_edges(
            arms in proptest::collection::vec(0u8..3, 2..10),
            keep in proptest::collection::vec(any::<bool>(), 45),
            ws in proptest::collection::vec(0.0f64..=1.0, 45),
        ) {
            let n = arms.len();
            let pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).collect();
            let edges: Vec<_> = pairs.iter().zip(&keep).filter(|(_, k)| **k).map(|(e, _)| *e).collect();
            let m = edges.len();
            let g = AttributedGraph::from_edges(n, edges).unwrap()
                .with_edge_weights(ws[..m].to_vec()).unwrap();
            let l = NodeLabeling::new(arms.iter().map(|&a| [Arm::Treated, Arm::Control, Arm::Excluded][a as usize]).collect());
            let c = edge_census(&g, &l);
            prop_assert_eq!(c.crossing + c.within + c.touching_excluded, m);
            if m > 0 {
                let cut = cut_metrics(&g, &l, CutDenominator::All).unwrap();
                prop_assert!((0.0..=1.0).contains(&cut.edge_fraction));
                let theta = theta_hat(&g, &l).unwrap();
                let total: f64 = g.edge_weights().unwrap().iter().sum();
                if total > 0.0 {
                    prop_assert_eq!(theta == 0.0, cut.weight_fraction == Some(0.0));
                }
            }
        }

        #[test]
        fn tte_ignores_excluded_outcomes(flags in proptest::collection::vec(any::<bool>(), 6)) {
            let l = NodeLabeling::new(vec![Arm::Treated, Arm::Control, Arm::Excluded, Arm::Treated, Arm::Control, Arm::Excluded]);
            let mut a: Vec<Option<bool>> = flags.iter().map(|&f| Some(f)).collect();
            a[2] = None;
            a[5] = None;
            let base = estimate_tte(&l, &outcome(a.clone())).unwrap();
            a[2] = Some(true);
            prop_assert_eq!(estimate_tte(&l, &outcome(a)).unwrap(), base);
        }
    }
}
