use cmatch::evaluation::{
    covariate_distance, cut_metrics, edge_census, estimate_tte, evaluate_runs, rmse, theta_hat, CutDenominator,
    RunRecord,
};
use cmatch::graph::{generate_sbm, Arm, AttributedGraph, NodeLabeling};
use cmatch::simulation::{
    apply_contagion, apply_direct_interference, simulate, simulate_base, Interference, OutcomeConfig,
    SimulationOutcome, SpilloverProbability,
};
use proptest::prelude::*;

use Arm::{Control as C, Excluded as X, Treated as T};

fn cfg(p_treated: f64, p_control: f64, ep: f64, interference: Interference) -> OutcomeConfig {
    OutcomeConfig { p_treated, p_control, ep: SpilloverProbability::Fixed(ep), interference, runs: 1 }
}

fn outcome(active: &[Option<bool>]) -> SimulationOutcome {
    SimulationOutcome { active: active.to_vec(), run: 0, seed: 0 }
}

fn star(leaves: usize) -> AttributedGraph {
    AttributedGraph::from_edges(leaves + 1, (1..=leaves).map(|l| (0, l))).unwrap()
}

#[test]
fn base_probabilities_at_the_extremes() {
    let l = NodeLabeling::new(vec![T, C, X, T, C]);
    let out = simulate_base(&l, &cfg(1.0, 0.0, 0.0, Interference::None), 1, 0);
    assert_eq!(out.active, vec![Some(true), Some(false), None, Some(true), Some(false)]);
    let out = simulate_base(&l, &cfg(0.0, 0.0, 0.0, Interference::None), 1, 0);
    assert_eq!(out.active_count(), 0);
}

#[test]
fn base_rate_over_ten_thousand_nodes() {
    let l = NodeLabeling::all(10_000, T);
    let rate = simulate_base(&l, &OutcomeConfig::default(), 3, 0).active_count() as f64 / 10_000.0;
    let sd = (0.4f64 * 0.6 / 10_000.0).sqrt();
    assert!((rate - 0.4).abs() <= 3.0 * sd, "{rate}");
}

#[test]
fn direct_interference_examples() {
    let g = star(1);
    let l = NodeLabeling::new(vec![C, T]);
    let base = outcome(&[Some(false), Some(false)]);
    let on = apply_direct_interference(&g, &l, &base, &cfg(0.4, 0.2, 1.0, Interference::Direct)).unwrap();
    assert_eq!(on.active[0], Some(true));
    let off = apply_direct_interference(&g, &l, &base, &cfg(0.4, 0.2, 0.0, Interference::Direct)).unwrap();
    assert_eq!(off, base);
    // treated nodes never receive direct spillover
    let l = NodeLabeling::new(vec![T, C]);
    let back = outcome(&[Some(false), Some(true)]);
    let out = apply_direct_interference(&g, &l, &back, &cfg(0.4, 0.2, 1.0, Interference::Direct)).unwrap();
    assert_eq!(out.active[0], Some(false));
}

#[test]
fn direct_interference_follows_the_complement_rule() {
    let g = star(3);
    let l = NodeLabeling::new(vec![C, T, T, T]);
    let c = cfg(0.4, 0.2, 0.5, Interference::Direct);
    let trials = 20_000u64;
    let hits = (0..trials)
        .filter(|&r| {
            let base = SimulationOutcome { active: vec![Some(false); 4], run: r, seed: 9 };
            apply_direct_interference(&g, &l, &base, &c).unwrap().active[0] == Some(true)
        })
        .count() as f64;
    let p = 1.0 - 0.5f64.powi(3);
    let sd = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((hits / trials as f64 - p).abs() <= 4.0 * sd);
}

#[test]
fn contagion_examples() {
    let g = AttributedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
    let l = NodeLabeling::new(vec![T, C, C]);
    let base = outcome(&[Some(true), Some(false), Some(false)]);
    let out = apply_contagion(&g, &l, &base, &cfg(0.4, 0.2, 1.0, Interference::Contagion)).unwrap();
    // one hop only, and only across arms
    assert_eq!(out.active, vec![Some(true), Some(true), Some(false)]);
    let off = apply_contagion(&g, &l, &base, &cfg(0.4, 0.2, 0.0, Interference::Contagion)).unwrap();
    assert_eq!(off, base);
    // treated nodes can be reached too
    let l = NodeLabeling::new(vec![C, T, C]);
    let out = apply_contagion(&g, &l, &base, &cfg(0.4, 0.2, 1.0, Interference::Contagion)).unwrap();
    assert_eq!(out.active[1], Some(true));
}

#[test]
fn contagion_uses_one_draw_per_node() {
    let g = star(3);
    let l = NodeLabeling::new(vec![C, T, T, T]);
    let c = cfg(0.4, 0.2, 0.5, Interference::Contagion);
    let trials = 20_000u64;
    let hits = (0..trials)
        .filter(|&r| {
            let base = SimulationOutcome { active: vec![Some(false), Some(true), Some(true), Some(true)], run: r, seed: 4 };
            apply_contagion(&g, &l, &base, &c).unwrap().active[0] == Some(true)
        })
        .count() as f64;
    let sd = (0.25 / trials as f64).sqrt();
    assert!((hits / trials as f64 - 0.5).abs() <= 4.0 * sd);
}

#[test]
fn edge_weight_mode_needs_weights() {
    let g = star(2);
    let l = NodeLabeling::new(vec![C, T, T]);
    let c = OutcomeConfig { ep: SpilloverProbability::EdgeWeight, interference: Interference::Direct, ..Default::default() };
    assert_eq!(simulate(&g, &l, &c, 1, 0).unwrap_err().kind(), "missing_weights");
    let weighted = g.with_edge_weights(vec![1.0, 0.0]).unwrap();
    let base = outcome(&[Some(false), Some(false), Some(false)]);
    assert_eq!(apply_direct_interference(&weighted, &l, &base, &c).unwrap().active[0], Some(true));
}

#[test]
fn estimator_examples() {
    let l = NodeLabeling::new(vec![T, T, T, C, C, C, C, X]);
    let out = outcome(&[Some(true), Some(true), Some(false), Some(true), Some(false), Some(false), Some(false), None]);
    assert!((estimate_tte(&l, &out).unwrap() - 5.0 / 12.0).abs() < 1e-12);
    let all = outcome(&[Some(true), Some(true), Some(true), Some(false), Some(false), Some(false), Some(false), None]);
    assert_eq!(estimate_tte(&l, &all).unwrap(), 1.0);
    assert!(estimate_tte(&NodeLabeling::all(3, T), &outcome(&[Some(true); 3])).is_err());

    assert!((rmse(&[0.3, 0.1], 0.2).unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(rmse(&[0.2, 0.2], 0.2).unwrap(), 0.0);
    assert!((rmse(&[0.35], 0.2).unwrap() - 0.15).abs() < 1e-12);
    assert!(rmse(&[], 0.2).is_err());
}

#[test]
fn covariate_distance_by_hand() {
    let g = AttributedGraph::from_edges(4, std::iter::empty())
        .unwrap()
        .with_features(vec![vec![1.0, 0.0], vec![0.0, 0.5], vec![0.0, 0.0], vec![0.5, 1.0]])
        .unwrap();
    // treated mean (0.5, 0.25), control mean (0.25, 0.5)
    let l = NodeLabeling::new(vec![T, T, C, C]);
    let d = covariate_distance(&g, &l).unwrap();
    assert!((d - (0.0625f64 + 0.0625).sqrt()).abs() < 1e-12);
    let same = NodeLabeling::new(vec![T, C, C, T]);
    let g2 = AttributedGraph::from_edges(4, std::iter::empty())
        .unwrap()
        .with_features(vec![vec![0.3]; 4])
        .unwrap();
    assert_eq!(covariate_distance(&g2, &same).unwrap(), 0.0);
}

#[test]
fn cut_metrics_and_theta_by_hand() {
    // five edges, weights 0.1..0.5; arms T T C C X
    let g = AttributedGraph::from_edges(5, [(0, 1), (1, 2), (0, 3), (2, 3), (3, 4)])
        .unwrap()
        .with_edge_weights(vec![0.1, 0.2, 0.3, 0.4, 0.5])
        .unwrap();
    let l = NodeLabeling::new(vec![T, T, C, C, X]);
    assert!((theta_hat(&g, &l).unwrap() - 0.5).abs() < 1e-12);
    let all = cut_metrics(&g, &l, CutDenominator::All).unwrap();
    assert!((all.edge_fraction - 0.4).abs() < 1e-12);
    assert!((all.weight_fraction.unwrap() - 0.5 / 1.5).abs() < 1e-12);
    let assigned = cut_metrics(&g, &l, CutDenominator::Assigned).unwrap();
    assert!((assigned.edge_fraction - 0.5).abs() < 1e-12);
    assert!((assigned.weight_fraction.unwrap() - 0.5).abs() < 1e-12);

    let pair = AttributedGraph::from_edges(2, [(0, 1)]).unwrap().with_edge_weights(vec![0.3]).unwrap();
    let split = NodeLabeling::new(vec![T, C]);
    let m = cut_metrics(&pair, &split, CutDenominator::All).unwrap();
    assert_eq!((m.edge_fraction, m.weight_fraction), (1.0, Some(1.0)));
    assert!((theta_hat(&pair, &split).unwrap() - 0.3).abs() < 1e-12);
    let m = cut_metrics(&pair, &NodeLabeling::all(2, T), CutDenominator::All).unwrap();
    assert_eq!((m.edge_fraction, m.weight_fraction), (0.0, Some(0.0)));
    assert!(cut_metrics(&star(0), &NodeLabeling::all(1, T), CutDenominator::All).is_err());
}

#[test]
fn report_collects_runs() {
    let g = generate_sbm(2, 5, 0.8, 0.2, 0.1, 2).unwrap();
    let weights = vec![0.5; g.edge_count()];
    let g = g.with_edge_weights(weights).unwrap();
    let l = NodeLabeling::new((0..10).map(|v| if v < 5 { T } else { C }).collect());
    let c = OutcomeConfig { runs: 4, ..Default::default() };
    let outs: Vec<_> = (0..4).map(|r| simulate(&g, &l, &c, 6, r).unwrap()).collect();
    let records: Vec<_> = outs.iter().map(|o| RunRecord { labeling: &l, outcome: o }).collect();
    let report = evaluate_runs(&g, "cmatch", &records, c.true_tte(), CutDenominator::All).unwrap();
    assert_eq!(report.estimates.len(), 4);
    let direct: Vec<f64> = outs.iter().map(|o| estimate_tte(&l, o).unwrap()).collect();
    assert_eq!(report.estimates, direct);
    assert!((report.rmse - rmse(&direct, 0.2).unwrap()).abs() < 1e-12);
    assert_eq!((report.treated_count, report.control_count, report.kept_node_count), (5, 5, 10));
}

fn labeled_graph() -> impl Strategy<Value = (AttributedGraph, NodeLabeling)> {
    (2usize..40, any::<u64>(), 0.05f64..0.5).prop_flat_map(|(n, s, d)| {
        let g = generate_sbm(1, n, d, 0.0, 0.0, s).unwrap();
        let m = g.edge_count();
        (
            Just(g),
            proptest::collection::vec(prop_oneof![Just(T), Just(C), Just(X)], n),
            proptest::collection::vec(0.0f64..=1.0, m),
        )
            .prop_map(|(g, arms, w)| (g.with_edge_weights(w).unwrap(), NodeLabeling::new(arms)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spillover_never_deactivates((g, l) in labeled_graph(), ep in 0.0f64..=1.0, seed in any::<u64>(), run in 0u64..50) {
        let base = simulate_base(&l, &OutcomeConfig::default(), seed, run);
        for interference in [Interference::Direct, Interference::Contagion] {
            let c = cfg(0.4, 0.2, ep, interference);
            let out = match interference {
                Interference::Direct => apply_direct_interference(&g, &l, &base, &c).unwrap(),
                _ => apply_contagion(&g, &l, &base, &c).unwrap(),
            };
            for v in 0..g.node_count() {
                prop_assert!(!(base.active[v] == Some(true) && out.active[v] != Some(true)));
                prop_assert_eq!(out.active[v].is_none(), l.arm(v) == X);
                if interference == Interference::Direct && l.arm(v) != C {
                    prop_assert_eq!(out.active[v], base.active[v]);
                }
            }
        }
    }

    #[test]
    fn no_crossing_edges_means_no_spillover((g, l) in labeled_graph(), seed in any::<u64>()) {
        // keep one arm per connected side: everything Treated or Excluded
        let arms = l.arms().iter().map(|&a| if a == C { T } else { a }).collect();
        let l = NodeLabeling::new(arms);
        for interference in [Interference::Direct, Interference::Contagion] {
            let c = cfg(0.4, 0.2, 1.0, interference);
            let base = simulate_base(&l, &c, seed, 0);
            prop_assert_eq!(simulate(&g, &l, &c, seed, 0).unwrap(), base);
        }
    }

    #[test]
    fn simulation_is_deterministic_per_run((g, l) in labeled_graph(), seed in any::<u64>(), run in 0u64..50) {
        let c = OutcomeConfig::default();
        prop_assert_eq!(simulate(&g, &l, &c, seed, run).unwrap(), simulate(&g, &l, &c, seed, run).unwrap());
    }

    #[test]
    fn estimate_ignores_excluded_outcomes_and_order((g, l) in labeled_graph(), seed in any::<u64>(), flip in any::<bool>()) {
        let out = simulate_base(&l, &OutcomeConfig::default(), seed, 0);
        prop_assume!(l.count(T) > 0 && l.count(C) > 0);
        let tte = estimate_tte(&l, &out).unwrap();
        let mut noisy = out.clone();
        for v in 0..g.node_count() {
            if l.arm(v) == X {
                noisy.active[v] = Some(flip);
            }
        }
        prop_assert_eq!(estimate_tte(&l, &noisy).unwrap(), tte);
        let rev_l = NodeLabeling::new(l.arms().iter().rev().copied().collect());
        let rev_o = SimulationOutcome { active: out.active.iter().rev().copied().collect(), ..out.clone() };
        prop_assert!((estimate_tte(&rev_l, &rev_o).unwrap() - tte).abs() < 1e-12);
    }

    #[test]
    fn cut_fractions_partition_the_edges((g, l) in labeled_graph()) {
        prop_assume!(g.edge_count() > 0);
        let census = edge_census(&g, &l);
        prop_assert_eq!(census.crossing + census.within + census.touching_excluded, g.edge_count());
        let m = cut_metrics(&g, &l, CutDenominator::All).unwrap();
        prop_assert!((0.0..=1.0).contains(&m.edge_fraction));
        let w = m.weight_fraction.unwrap();
        prop_assert!((0.0..=1.0).contains(&w));
        let theta = theta_hat(&g, &l).unwrap();
        let total: f64 = g.edge_weights().unwrap().iter().sum();
        if total > 0.0 {
            prop_assert_eq!(theta == 0.0, w == 0.0);
        }
    }

    #[test]
    fn rmse_is_zero_only_at_the_truth(est in proptest::collection::vec(-1.0f64..1.0, 1..20), t in -1.0f64..1.0) {
        let r = rmse(&est, t).unwrap();
        prop_assert!(r >= 0.0);
        prop_assert_eq!(r == 0.0, est.iter().all(|&e| e == t));
    }
}
