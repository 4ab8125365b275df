//! Acceptance checks, one line per criterion. Runs as a plain binary so each
//! criterion reports its measured values; exits nonzero if any fails.

use std::collections::BTreeSet;
use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use cmatch::clustering::{mcl, reldg, Clustering, ClustererConfig, MclParams};
use cmatch::design::{ClusterWeightScheme, Method};
use cmatch::experiment::{execute, prepare_graph, sweep, CellStatus, ExperimentConfig, PreparedGraph, RunResult};
use cmatch::graph::{generate_sbm, Arm, AttributedGraph, NodeLabeling};
use cmatch::matching::{brute_force_matching, max_weight_bipartite, max_weight_matching, WeightedMatchGraph};
use cmatch::simulation::{apply_direct_interference, Interference, OutcomeConfig, SimulationOutcome, SpilloverProbability};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Check = (bool, String);

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("matching exactness", matching_exactness),
        ("partition validity", partition_validity),
        ("sampling-noise floor", sampling_noise_floor),
        ("randomized cut fraction", randomized_cut_fraction),
        ("crossing-edge ordering", crossing_edge_ordering),
        ("rmse grows with spillover", rmse_grows_with_spillover),
        ("rmse ordering", rmse_ordering),
        ("cluster count tradeoff", cluster_count_tradeoff),
        ("complement rule", complement_rule),
        ("sweep determinism", sweep_determinism),
        ("scheme grid health", scheme_grid_health),
    ];
    let only: Option<usize> = std::env::var("CMATCH_CRITERION").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if only.is_some_and(|k| k != i + 1) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = check();
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {} ({name}): {verdict} {detail} [{:.1?}]", i + 1, start.elapsed());
        failed += usize::from(!pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

fn sbm_config(blocks: usize, size: usize, p_in: f64, p_out: f64, noise: f64, graph_seed: u64, seed: u64) -> ExperimentConfig {
    let text = format!(
        "seed = {seed}\n[graph.sbm]\nblocks = {blocks}\nblock_size = {size}\np_in = {p_in}\np_out = {p_out}\n\
         attr_noise = {noise}\nseed = {graph_seed}\n[evaluation]\nnoise_floor = false\n"
    );
    ExperimentConfig::from_toml_str(&text, &[], None).expect("valid config")
}

fn prepared(config: &ExperimentConfig) -> PreparedGraph {
    prepare_graph(&config.graph, config.similarity, config.seed).expect("graph")
}

fn with_design(base: &ExperimentConfig, method: Method, clusterer: ClustererConfig) -> ExperimentConfig {
    let mut c = base.clone();
    c.design.method = method;
    c.design.clusterer = clusterer;
    c.design.cluster_weight = ClusterWeightScheme::C;
    c
}

fn with_outcomes(base: &ExperimentConfig, ep: SpilloverProbability, interference: Interference, runs: usize) -> ExperimentConfig {
    let mut c = base.clone();
    c.simulation = OutcomeConfig { ep, interference, runs, ..OutcomeConfig::default() };
    c
}

fn run(config: &ExperimentConfig, graph: &PreparedGraph) -> RunResult {
    execute(config, graph).unwrap_or_else(|e| panic!("{}", e.to_json()))
}

fn mcl_default() -> ClustererConfig {
    ClustererConfig::Mcl(MclParams::default())
}

fn reldg_k(clusters: usize) -> ClustererConfig {
    ClustererConfig::Reldg { clusters, restreams: 10 }
}

/// Best assignment by enumerating, row by row, every unused column or none.
fn enumerate_assignments(w: &[Vec<f64>], row: usize, used: &mut Vec<bool>) -> f64 {
    if row == w.len() {
        return 0.0;
    }
    let mut best = enumerate_assignments(w, row + 1, used);
    for c in 0..used.len() {
        if !used[c] {
            used[c] = true;
            best = best.max(w[row][c] + enumerate_assignments(w, row + 1, used));
            used[c] = false;
        }
    }
    best
}

fn matching_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut general_mismatch = 0;
    for _ in 0..500 {
        let n = rng.gen_range(1..=10);
        let mut edges = Vec::new();
        let density = rng.gen_range(0.1..1.0);
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.gen_bool(density) {
                    edges.push((a, b, f64::from(rng.gen_range(0..100u32))));
                }
            }
        }
        let g = WeightedMatchGraph::from_edges(n, edges).unwrap();
        let fast = max_weight_matching(&g);
        let exact = brute_force_matching(&g).unwrap();
        if !fast.is_valid() || fast.total_weight(&g) != exact.total_weight(&g) {
            general_mismatch += 1;
        }
    }
    let mut bipartite_mismatch = 0;
    for _ in 0..500 {
        let (r, c) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let w: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| f64::from(rng.gen_range(0..100u32))).collect()).collect();
        let pairs = max_weight_bipartite(&w).unwrap();
        let rows: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
        let cols: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
        let total: f64 = pairs.iter().map(|&(i, j)| w[i][j]).sum();
        let distinct = rows.len() == pairs.len() && cols.len() == pairs.len();
        if !distinct || total != enumerate_assignments(&w, 0, &mut vec![false; c]) {
            bipartite_mismatch += 1;
        }
    }
    (
        general_mismatch == 0 && bipartite_mismatch == 0,
        format!("general mismatches {general_mismatch}/500, bipartite mismatches {bipartite_mismatch}/500"),
    )
}

fn is_partition(c: &Clustering, n: usize) -> bool {
    let labels = c.assignment();
    labels.len() == n
        && labels.iter().all(|&l| l < c.count())
        && c.sizes().iter().all(|&s| s > 0)
        && c.members().iter().map(Vec::len).sum::<usize>() == n
}

fn same_partition(c: &Clustering, labels: &[usize]) -> bool {
    let n = labels.len();
    (0..n).all(|a| (0..n).all(|b| (c.cluster_of(a) == c.cluster_of(b)) == (labels[a] == labels[b])))
}

fn partition_validity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut invalid = 0;
    for i in 0..200u64 {
        let n = rng.gen_range(2..80);
        let g = generate_sbm(1, n, rng.gen_range(0.0..0.4), 0.0, 0.0, i).unwrap();
        let weights = (0..g.edge_count()).map(|_| rng.gen_range(0.01..1.0)).collect();
        let g = g.with_edge_weights(weights).unwrap();
        let m = mcl(&g, &MclParams::default()).unwrap().clustering;
        let k = rng.gen_range(1..=n);
        let r = reldg(&g, k, 10, i).unwrap();
        invalid += usize::from(!is_partition(&m, n)) + usize::from(!is_partition(&r, n));
    }
    let triangles = AttributedGraph::from_edges(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
        .unwrap()
        .with_edge_weights(vec![1.0; 6])
        .unwrap();
    let two = mcl(&triangles, &MclParams::default()).unwrap().clustering;
    let triangles_ok = same_partition(&two, &[0, 0, 0, 1, 1, 1]);
    let mut blocks_ok = 0;
    for seed in 0..10u64 {
        let config = sbm_config(5, 8, 1.0, 0.0, 0.2, seed, seed);
        let g = prepared(&config).graph;
        let c = mcl(&g, &MclParams::default()).unwrap().clustering;
        let truth: Vec<usize> = (0..40).map(|v| v / 8).collect();
        blocks_ok += usize::from(same_partition(&c, &truth));
    }
    (
        invalid == 0 && triangles_ok && blocks_ok == 10,
        format!("invalid partitions {invalid}/400, two triangles recovered {triangles_ok}, disjoint cliques recovered {blocks_ok}/10"),
    )
}

/// Standard deviation of the mean difference-in-means over the runs when
/// outcomes are independent Bernoulli draws.
fn binomial_sigma(result: &RunResult, p1: f64, p0: f64) -> f64 {
    let s = result.assignments.len() as f64;
    let var: f64 = result
        .assignments
        .iter()
        .map(|a| {
            let n1 = a.labeling.count(Arm::Treated) as f64;
            let n0 = a.labeling.count(Arm::Control) as f64;
            p1 * (1.0 - p1) / n1 + p0 * (1.0 - p0) / n0
        })
        .sum();
    var.sqrt() / s
}

fn large_sbm(seed: u64) -> ExperimentConfig {
    sbm_config(10, 200, 0.1, 0.0025, 0.3, seed, seed)
}

fn sampling_noise_floor() -> Check {
    let base = with_outcomes(&large_sbm(3), SpilloverProbability::Fixed(0.0), Interference::None, 200);
    let graph = prepared(&base);
    let mut pass = true;
    let mut details = Vec::new();
    for method in Method::ALL {
        let config = with_design(&base, method, mcl_default());
        let result = run(&config, &graph);
        let sigma = binomial_sigma(&result, 0.4, 0.2);
        let z = (result.report.mean_estimate - 0.2) / sigma;
        pass &= z.abs() <= 3.0;
        details.push(format!("{method} {:.4} (z {z:+.2})", result.report.mean_estimate));
    }
    (pass, details.join(", "))
}

fn randomized_cut_fraction() -> Check {
    let base = with_outcomes(&large_sbm(4), SpilloverProbability::Fixed(0.0), Interference::None, 10);
    let graph = prepared(&base);
    let result = run(&with_design(&base, Method::Randomized, mcl_default()), &graph);
    let f = result.report.crossing_edge_fraction;
    ((f - 0.5).abs() <= 0.02, format!("crossing fraction {f:.4}"))
}

/// Ten attribute-correlated blocks with a mean degree near six.
fn medium_sbm(trial: u64) -> ExperimentConfig {
    sbm_config(10, 100, 0.05, 0.001, 0.3, 100 + trial, 200 + trial)
}

/// Runs `f` for ten seeded trials and counts the successes.
fn trials(f: impl Fn(u64) -> (bool, String) + Sync + Send) -> (usize, Vec<String>) {
    let results: Vec<(bool, String)> = (0..10u64).into_par_iter().map(&f).collect();
    let wins = results.iter().filter(|r| r.0).count();
    (wins, results.into_iter().map(|r| r.1).collect())
}

fn crossing_edge_ordering() -> Check {
    let (wins, details) = trials(|t| {
        let base = with_outcomes(&medium_sbm(t), SpilloverProbability::Fixed(0.1), Interference::Contagion, 10);
        let graph = prepared(&base);
        let cut = |method| run(&with_design(&base, method, mcl_default()), &graph).report.crossing_edge_fraction;
        let (c, b, r) = (cut(Method::Cmatch), cut(Method::Cbr), cut(Method::Randomized));
        (c < b && b < r, format!("{c:.3}<{b:.3}<{r:.3}"))
    });
    (wins >= 9, format!("{wins}/10 trials ordered [{}]", details.join(" ")))
}

fn rmse_grows_with_spillover() -> Check {
    let (wins, details) = trials(|t| {
        let base = with_design(&medium_sbm(t), Method::Cbr, mcl_default());
        let graph = prepared(&base);
        let rmse = |ep| {
            let c = with_outcomes(&base, SpilloverProbability::Fixed(ep), Interference::Contagion, 20);
            run(&c, &graph).report.rmse
        };
        let (low, high) = (rmse(0.1), rmse(0.5));
        (high >= low, format!("{low:.3}/{high:.3}"))
    });
    (wins >= 9, format!("{wins}/10 trials with rmse(0.5) >= rmse(0.1) [{}]", details.join(" ")))
}

fn rmse_ordering() -> Check {
    let mut pass = true;
    let mut lines = Vec::new();
    for interference in [Interference::Contagion, Interference::Direct] {
        let (wins, details) = trials(|t| {
            let base = with_outcomes(&medium_sbm(t), SpilloverProbability::EdgeWeight, interference, 10);
            let graph = prepared(&base);
            // reLDG gets as many clusters as MCL found
            let cm = run(&with_design(&base, Method::Cmatch, mcl_default()), &graph);
            let k = cm.diagnostics.cluster_count;
            let c = cm.report.rmse;
            let b = run(&with_design(&base, Method::Cbr, reldg_k(k)), &graph).report.rmse;
            (c < b, format!("{c:.3}<{b:.3}@{k}"))
        });
        pass &= wins >= 8;
        lines.push(format!("{interference} {wins}/10 [{}]", details.join(" ")));
    }
    (pass, lines.join("; "))
}

/// Length of the longest subsequence ordered by `ok`.
fn longest_monotone(values: &[f64], ok: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = vec![1; values.len()];
    for i in 0..values.len() {
        for j in 0..i {
            if ok(values[j], values[i]) {
                best[i] = best[i].max(best[j] + 1);
            }
        }
    }
    best.into_iter().max().unwrap_or(0)
}

fn cluster_count_tradeoff() -> Check {
    let base = with_outcomes(&medium_sbm(0), SpilloverProbability::Fixed(0.1), Interference::Contagion, 10);
    let graph = prepared(&base);
    let n = graph.graph.node_count();
    let counts = [2, 10, 100, n / 2];
    let reports: Vec<_> = counts
        .par_iter()
        .map(|&k| run(&with_design(&base, Method::Cbr, reldg_k(k)), &graph).report)
        .collect();
    let distance: Vec<f64> = reports.iter().map(|r| r.covariate_distance).collect();
    let crossing: Vec<f64> = reports.iter().map(|r| r.crossing_edge_fraction).collect();
    let d = longest_monotone(&distance, |a, b| b <= a);
    let c = longest_monotone(&crossing, |a, b| b >= a);
    (
        d >= 3 && c >= 3,
        format!(
            "clusters {counts:?}, distance {distance:.3?} ({d}/4 monotone), crossing {crossing:.3?} ({c}/4 monotone)"
        ),
    )
}

fn complement_rule() -> Check {
    let g = AttributedGraph::from_edges(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
    let labeling = NodeLabeling::new(vec![Arm::Control, Arm::Treated, Arm::Treated, Arm::Treated]);
    let cfg = OutcomeConfig {
        ep: SpilloverProbability::Fixed(0.5),
        interference: Interference::Direct,
        ..OutcomeConfig::default()
    };
    let trials = 100_000u64;
    let hits = (0..trials)
        .into_par_iter()
        .filter(|&run| {
            let base = SimulationOutcome { active: vec![Some(false); 4], run, seed: 17 };
            apply_direct_interference(&g, &labeling, &base, &cfg).unwrap().active[0] == Some(true)
        })
        .count();
    let rate = hits as f64 / trials as f64;
    ((rate - 0.875).abs() <= 0.005, format!("activation frequency {rate:.4}"))
}

const SWEEP_CONFIG: &str = r#"
seed = 5

[graph.sbm]
blocks = 10
block_size = 20
p_in = 0.3
p_out = 0.02
attr_noise = 0.3

[simulation]
runs = 3
"#;

fn sweep_determinism() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let grid = "[[grid]]\nkey = \"design.method\"\nvalues = [\"cmatch\", \"randomized\", \"cr\", \"cbr\", \"match\"]\n\
                [[grid]]\nkey = \"simulation.ep\"\nvalues = [0.1, 0.5, \"edge-weight\"]\n";
    let config = dir.path().join("sweep.toml");
    fs::write(&config, format!("{SWEEP_CONFIG}{grid}")).unwrap();
    let aggregate = |workers: &str| {
        let out = dir.path().join(format!("out-{workers}"));
        let status = Command::new(env!("CARGO_BIN_EXE_cmatch"))
            .args(["sweep", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env("CMATCH_WORKERS", workers)
            .output()
            .expect("binary runs");
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        fs::read(out.join("aggregate.csv")).unwrap()
    };
    let (a, b) = (aggregate("1"), aggregate("4"));
    let rows = String::from_utf8_lossy(&a).lines().filter(|l| !l.starts_with('#')).count() - 1;
    (a == b, format!("aggregate.csv with 1 and 4 workers identical: {} ({rows} rows)", a == b))
}

fn scheme_grid_health() -> Check {
    let grid = "[[grid]]\nkey = \"design.node_match\"\nvalues = [\"tnm0\", \"tnm1\", \"tnm2\", \"tnm3\", \"bnm\"]\n\
                [[grid]]\nkey = \"design.cluster_weight\"\nvalues = [\"e\", \"c\", \"s\", \"mc\", \"ms\", \"mss\"]\n\
                [[grid]]\nkey = \"design.cluster_graph\"\nvalues = [\"tcm0\", \"tcm1\", \"tcm2\", \"tcm3\", \"gcm\"]\n";
    let base = ExperimentConfig::from_toml_str(&format!("{SWEEP_CONFIG}{grid}"), &[], None).unwrap();
    let result = sweep(&base, None, rayon::current_num_threads()).unwrap_or_else(|e| panic!("{}", e.to_json()));
    let m = &result.manifest;
    let setting = |cell: &cmatch::experiment::CellRecord, key: &str| {
        cell.settings.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).unwrap_or_default()
    };
    let expected_rejected = m
        .cells
        .iter()
        .filter(|c| {
            setting(c, "design.node_match") == "bnm"
                && ["mc", "ms", "mss"].contains(&setting(c, "design.cluster_weight").as_str())
        })
        .count();
    let rejected_correctly = m.cells.iter().all(|c| {
        let incompatible = setting(c, "design.node_match") == "bnm"
            && ["mc", "ms", "mss"].contains(&setting(c, "design.cluster_weight").as_str());
        incompatible == (c.status == CellStatus::Rejected)
    });
    let pass = m.cell_count == 150
        && m.failed == 0
        && m.rejected == 15
        && expected_rejected == 15
        && rejected_correctly
        && m.ok == 115
        && m.collapsed == 20
        && result.reports.len() == 115;
    (
        pass,
        format!(
            "cells {}, ok {}, rejected {} (all bnm with mc/ms/mss: {rejected_correctly}), collapsed {}, failed {}",
            m.cell_count, m.ok, m.rejected, m.collapsed, m.failed
        ),
    )
}
