use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, GraphSpec};
use crate::design::{self, assignment_csv, DesignAssignment, PlanDiagnostics};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_runs, rmse, estimate_tte, MetricsReport, RunRecord};
use crate::graph::{self, write_atomically, Arm, AttributedGraph, IdMap, NodeLabeling};
use crate::seed;
use crate::similarity::{annotate_edge_spillover, SimilarityMetric};
use crate::simulation::{simulate, Interference, OutcomeConfig, SimulationOutcome};

/// Pipeline stage an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Config,
    Graph,
    Design,
    Simulation,
    Evaluation,
    Output,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Graph => "graph",
            Stage::Design => "design",
            Stage::Simulation => "simulation",
            Stage::Evaluation => "evaluation",
            Stage::Output => "output",
        }
    }
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
}

impl StageError {
    /// `{"error": {"stage", "kind", "message"}}`
    /// `{"stage", "kind", "message"}`.
    pub fn details(&self) -> serde_json::Value {
        serde_json::json!({
            "stage": self.stage.as_str(),
            "kind": self.error.kind(),
            "message": self.error.to_string(),
        })
    }

    /// The details wrapped as `{"error": ...}`, as printed by the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.details() })
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage: {}", self.stage.as_str(), self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// A graph ready for design and simulation. Edges carry spillover weights
/// whenever they can be derived.
#[derive(Debug, Clone)]
pub struct PreparedGraph {
    pub graph: AttributedGraph,
    pub ids: IdMap,
}

/// Loads or generates the graph. Unweighted graphs with features get edge
/// weights from endpoint similarity under `metric`.
pub fn prepare_graph(spec: &GraphSpec, metric: SimilarityMetric, base_seed: u64) -> Result<PreparedGraph> {
    spec.validate()?;
    let (graph, ids) = match (&spec.sbm, &spec.edges) {
        (Some(sbm), _) => {
            let seed = sbm.seed.unwrap_or_else(|| seed::derive_config_seed(base_seed, "graph", 0));
            let g = graph::generate_sbm(sbm.blocks, sbm.block_size, sbm.p_in, sbm.p_out, sbm.attr_noise, seed)?;
            let n = g.node_count();
            (g, IdMap::sequential(n))
        }
        (None, Some(edges)) => {
            let files = graph::load_graph(edges, spec.attributes.as_deref())?;
            if files.warnings > 0 {
                log::warn!("{}: skipped {} malformed or duplicate lines", edges.display(), files.warnings);
            }
            (files.graph, files.ids)
        }
        (None, None) => unreachable!("validated"),
    };
    let graph = if graph.edge_weights().is_none() && graph.has_features() {
        annotate_edge_spillover(graph, metric)?
    } else {
        graph
    };
    Ok(PreparedGraph { graph, ids })
}

/// Seed of the assignment drawn for run `run`.
pub fn run_assignment_seed(seed: u64, run: u64) -> u64 {
    seed::derive_seed(seed, "run", run)
}

/// Everything one experiment produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub config_hash: String,
    pub diagnostics: PlanDiagnostics,
    pub warnings: Vec<String>,
    pub assignments: Vec<DesignAssignment>,
    pub outcomes: Vec<SimulationOutcome>,
    pub report: MetricsReport,
}

/// Plans the design once, then for every run draws an assignment, simulates
/// outcomes and evaluates.
pub fn execute(config: &ExperimentConfig, prepared: &PreparedGraph) -> std::result::Result<RunResult, StageError> {
    config.validate().at(Stage::Config)?;
    let graph = &prepared.graph;
    let sim = &config.simulation;
    let plan = design::plan(graph, &config.design, config.similarity, config.seed).at(Stage::Design)?;
    for w in &plan.warnings {
        log::warn!("{w}");
    }
    let assignments: Vec<DesignAssignment> = (0..sim.runs as u64)
        .map(|s| plan.assign(run_assignment_seed(config.seed, s)))
        .collect();
    let outcomes: Vec<SimulationOutcome> = assignments
        .par_iter()
        .enumerate()
        .map(|(s, a)| simulate(graph, &a.labeling, sim, config.seed, s as u64))
        .collect::<Result<_>>()
        .at(Stage::Simulation)?;

    let records: Vec<RunRecord<'_>> = assignments
        .iter()
        .zip(&outcomes)
        .map(|(a, o)| RunRecord {
            labeling: &a.labeling,
            outcome: o,
        })
        .collect();
    let mut report = evaluate_runs(
        graph,
        plan.method.as_str(),
        &records,
        sim.true_tte(),
        config.evaluation.denominator,
    )
    .at(Stage::Evaluation)?;
    if config.evaluation.noise_floor {
        report.noise_floor_rmse = Some(noise_floor(graph, &assignments, sim, config.seed)?);
    }
    Ok(RunResult {
        config_hash: config.hash(),
        diagnostics: plan.diagnostics,
        warnings: plan.warnings,
        assignments,
        outcomes,
        report,
    })
}

/// RMSE of the same assignments and base draws with spillover switched off.
fn noise_floor(
    graph: &AttributedGraph,
    assignments: &[DesignAssignment],
    sim: &OutcomeConfig,
    seed: u64,
) -> std::result::Result<f64, StageError> {
    let quiet = OutcomeConfig {
        interference: Interference::None,
        ..sim.clone()
    };
    let estimates: Vec<f64> = assignments
        .par_iter()
        .enumerate()
        .map(|(s, a)| {
            let o = simulate(graph, &a.labeling, &quiet, seed, s as u64)?;
            estimate_tte(&a.labeling, &o)
        })
        .collect::<Result<_>>()
        .at(Stage::Evaluation)?;
    rmse(&estimates, sim.true_tte()).at(Stage::Evaluation)
}

/// Loads the graph and executes.
pub fn run(config: &ExperimentConfig) -> std::result::Result<(PreparedGraph, RunResult), StageError> {
    let mut config = config.clone();
    config.validate().at(Stage::Config)?;
    config.pin_graph_seed();
    let prepared = prepare_graph(&config.graph, config.similarity, config.seed).at(Stage::Graph)?;
    let result = execute(&config, &prepared)?;
    Ok((prepared, result))
}

/// Simulates `cfg.runs` outcome draws for one fixed assignment.
pub fn simulate_fixed(
    graph: &AttributedGraph,
    labeling: &NodeLabeling,
    cfg: &OutcomeConfig,
    seed: u64,
) -> Result<Vec<SimulationOutcome>> {
    (0..cfg.runs as u64)
        .into_par_iter()
        .map(|s| simulate(graph, labeling, cfg, seed, s))
        .collect()
}

fn hash_line(hash: &str) -> String {
    format!("config_hash={hash}")
}

/// `run,node_id,arm,active` rows; `active` is empty for Excluded nodes.
pub fn outcomes_csv<'a>(
    runs: impl IntoIterator<Item = (&'a NodeLabeling, &'a SimulationOutcome)>,
    ids: &IdMap,
    config_hash: &str,
) -> Vec<u8> {
    let mut out = format!("# {}\n", hash_line(config_hash)).into_bytes();
    out.extend_from_slice(b"run,node_id,arm,active\n");
    for (labeling, outcome) in runs {
        for (node, arm) in labeling.arms().iter().enumerate() {
            let active = match outcome.active[node] {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            out.extend_from_slice(
                format!("{},{},{},{}\n", outcome.run, ids.id(node), arm.as_str(), active).as_bytes(),
            );
        }
    }
    out
}

/// Reads an outcomes CSV back into one labeling and outcome per run, in
/// run order.
pub fn read_outcomes_csv(path: &Path, ids: &IdMap) -> Result<Vec<(NodeLabeling, SimulationOutcome)>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let n = ids.len();
    let mut runs: std::collections::BTreeMap<u64, (Vec<Option<Arm>>, Vec<Option<bool>>)> =
        Default::default();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != 4 {
            return Err(Error::parse(path, line, "expected run,node_id,arm,active"));
        }
        let run: u64 = record[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("bad run '{}'", &record[0])))?;
        let node = ids
            .index(&record[1])
            .ok_or_else(|| Error::parse(path, line, format!("unknown node id '{}'", &record[1])))?;
        let arm: Arm = record[2].parse().map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
        let active = match (&record[3], arm) {
            ("", Arm::Excluded) => None,
            ("1", a) if a.is_assigned() => Some(true),
            ("0", a) if a.is_assigned() => Some(false),
            (v, _) => {
                return Err(Error::parse(path, line, format!("bad activation '{v}' for a {} node", arm.as_str())))
            }
        };
        let entry = runs.entry(run).or_insert_with(|| (vec![None; n], vec![None; n]));
        if entry.0[node].is_some() {
            return Err(Error::parse(path, line, format!("node '{}' listed twice in run {run}", &record[1])));
        }
        entry.0[node] = Some(arm);
        entry.1[node] = active;
    }
    if runs.is_empty() {
        return Err(Error::EmptyInput("outcomes file has no rows"));
    }
    runs.into_iter()
        .map(|(run, (arms, active))| {
            let arms: Vec<Arm> = arms
                .into_iter()
                .enumerate()
                .map(|(v, a)| {
                    a.ok_or_else(|| Error::parse(path, 0, format!("run {run} misses node '{}'", ids.id(v))))
                })
                .collect::<Result<_>>()?;
            Ok((NodeLabeling::new(arms), SimulationOutcome { active, run, seed: 0 }))
        })
        .collect()
}

/// metrics.json body.
pub fn metrics_json(
    report: &MetricsReport,
    config_hash: &str,
    diagnostics: Option<&PlanDiagnostics>,
    warnings: &[String],
) -> Vec<u8> {
    #[derive(Serialize)]
    struct Doc<'a> {
        config_hash: &'a str,
        #[serde(skip_serializing_if = "Option::is_none")]
        diagnostics: Option<&'a PlanDiagnostics>,
        warnings: &'a [String],
        metrics: &'a MetricsReport,
    }
    let doc = Doc {
        config_hash,
        diagnostics,
        warnings,
        metrics: report,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("metrics serialize");
    bytes.push(b'\n');
    bytes
}

/// metrics.csv body: a header and one row.
pub fn metrics_csv(report: &MetricsReport, config_hash: &str) -> Vec<u8> {
    let mut out = format!("# {}\n", hash_line(config_hash)).into_bytes();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MetricsReport::CSV_COLUMNS).expect("write to memory");
    w.write_record(report.csv_fields()).expect("write to memory");
    out.extend(w.into_inner().expect("flush to memory"));
    out
}

/// Writes assignment.csv (the first run's draw), outcomes.csv, metrics.json
/// and metrics.csv into `dir`, each atomically.
pub fn write_run(dir: &Path, ids: &IdMap, result: &RunResult) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = &result.config_hash;
    let first = &result.assignments[0];
    let comments = [hash_line(hash), format!("assignment_seed={}", first.seed)];
    write_atomically(&dir.join("assignment.csv"), &assignment_csv(first, ids, &comments))?;
    let runs = result.assignments.iter().map(|a| &a.labeling).zip(&result.outcomes);
    write_atomically(&dir.join("outcomes.csv"), &outcomes_csv(runs, ids, hash))?;
    write_atomically(
        &dir.join("metrics.json"),
        &metrics_json(&result.report, hash, Some(&result.diagnostics), &result.warnings),
    )?;
    write_atomically(&dir.join("metrics.csv"), &metrics_csv(&result.report, hash))
}
