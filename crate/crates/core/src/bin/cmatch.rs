use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cmatch::design::{self, assignment_csv, read_assignment_csv};
use cmatch::error::Error;
use cmatch::evaluation::{evaluate_runs, RunRecord};
use cmatch::experiment::{
    self, metrics_csv, metrics_json, outcomes_csv, parse_override, prepare_graph, read_outcomes_csv,
    run_assignment_seed, simulate_fixed, write_run, AtStage, ExperimentConfig, Stage, StageError,
};
use cmatch::graph::{self, IdMap};
use cmatch::similarity::annotate_edge_spillover;

type CliResult = Result<(), StageError>;

#[derive(Parser)]
#[command(name = "cmatch", version, about = "Network A/B test design by cluster matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an attributed stochastic block model graph.
    GenSbm(GenSbm),
    /// Design an experiment and write the assignment CSV.
    Design(DesignCmd),
    /// Simulate outcomes for a fixed assignment.
    Simulate(SimulateCmd),
    /// Evaluate simulated outcomes.
    Evaluate(EvaluateCmd),
    /// Design, simulate and evaluate in one go.
    Run(RunCmd),
    /// Run every cell of the config's grid.
    Sweep(SweepCmd),
}

#[derive(Args)]
struct GenSbm {
    #[arg(long)]
    blocks: usize,
    #[arg(long)]
    block_size: usize,
    #[arg(long)]
    p_in: f64,
    #[arg(long)]
    p_out: f64,
    /// Half-width of the uniform attribute noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write similarity edge weights under this metric.
    #[arg(long)]
    annotate: Option<String>,
    /// Output prefix; writes <prefix>.edges, <prefix>.attributes.csv and <prefix>.json.
    #[arg(long)]
    out: PathBuf,
}

/// Config file, overrides and the flags shared by every experiment command.
#[derive(Args)]
struct Common {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. --set design.cluster_weight=mss.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Edge list file (instead of the config's graph section).
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Attribute CSV for --edges.
    #[arg(long)]
    attributes: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// l2, cosine or jaccard.
    #[arg(long)]
    similarity: Option<String>,
}

#[derive(Args)]
struct DesignFlags {
    /// cmatch, randomized, cr, cbr or match.
    #[arg(long)]
    method: Option<String>,
    /// mcl or reldg.
    #[arg(long)]
    clusterer: Option<String>,
    #[arg(long)]
    inflation: Option<f64>,
    /// Cluster count for reLDG.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    restreams: Option<usize>,
    /// none, tnm0..tnm3, tnm@<alpha> or bnm.
    #[arg(long)]
    node_match: Option<String>,
    /// e, c, s, mc, ms or mss.
    #[arg(long)]
    cluster_weight: Option<String>,
    /// tcm0..tcm3, tcm@<beta> or gcm.
    #[arg(long)]
    cluster_graph: Option<String>,
}

#[derive(Args)]
struct SimulationFlags {
    /// direct, contagion or none.
    #[arg(long)]
    spillover: Option<String>,
    /// A probability such as 0.1, or edge-weight.
    #[arg(long)]
    ep: Option<String>,
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Args)]
struct DesignCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    design: DesignFlags,
    /// Assignment CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    simulation: SimulationFlags,
    /// Assignment CSV written by `design`.
    #[arg(long)]
    assignment: PathBuf,
    /// Outcomes CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateCmd {
    #[command(flatten)]
    common: Common,
    /// Outcomes CSV written by `simulate` or `run`.
    #[arg(long)]
    outcomes: PathBuf,
    /// Cut fraction denominator: all or assigned.
    #[arg(long)]
    denominator: Option<String>,
    /// Method name recorded in the report.
    #[arg(long, default_value = "evaluated")]
    label: String,
    /// Directory for metrics.json and metrics.csv; JSON goes to stdout either way.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    design: DesignFlags,
    #[command(flatten)]
    simulation: SimulationFlags,
    #[arg(long)]
    denominator: Option<String>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepCmd {
    #[command(flatten)]
    common: Common,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Overrides(Vec<(String, toml::Value)>);

impl Overrides {
    fn text(&mut self, key: &str, v: &Option<String>) {
        if let Some(v) = v {
            self.0.push((key.into(), toml::Value::String(v.clone())));
        }
    }

    fn path(&mut self, key: &str, v: &Option<PathBuf>) {
        if let Some(v) = v {
            self.0.push((key.into(), toml::Value::String(v.to_string_lossy().into_owned())));
        }
    }

    fn int(&mut self, key: &str, v: Option<u64>) -> Result<(), StageError> {
        if let Some(v) = v {
            let v = i64::try_from(v)
                .map_err(|_| Error::Config(format!("{key} = {v} does not fit a signed 64-bit integer")))
                .at(Stage::Config)?;
            self.0.push((key.into(), toml::Value::Integer(v)));
        }
        Ok(())
    }

    fn float(&mut self, key: &str, v: Option<f64>) {
        if let Some(v) = v {
            self.0.push((key.into(), toml::Value::Float(v)));
        }
    }

    fn common(c: &Common) -> Result<Self, StageError> {
        let mut o = Overrides(Vec::new());
        for s in &c.set {
            o.0.push(parse_override(s).at(Stage::Config)?);
        }
        if c.edges.is_some() {
            o.0.push(("graph".into(), toml::Value::Table(Default::default())));
        }
        o.path("graph.edges", &c.edges);
        o.path("graph.attributes", &c.attributes);
        o.int("seed", c.seed)?;
        o.text("similarity", &c.similarity);
        Ok(o)
    }

    fn design(&mut self, d: &DesignFlags) -> Result<(), StageError> {
        if let Some(name) = &d.clusterer {
            let mut t = toml::Table::new();
            t.insert("algorithm".into(), toml::Value::String(name.clone()));
            self.0.push(("design.clusterer".into(), toml::Value::Table(t)));
        } else if d.inflation.is_some() {
            self.text("design.clusterer.algorithm", &Some("mcl".into()));
        } else if d.clusters.is_some() || d.restreams.is_some() {
            self.text("design.clusterer.algorithm", &Some("reldg".into()));
        }
        self.text("design.method", &d.method);
        self.float("design.clusterer.inflation", d.inflation);
        self.int("design.clusterer.clusters", d.clusters.map(|v| v as u64))?;
        self.int("design.clusterer.restreams", d.restreams.map(|v| v as u64))?;
        self.text("design.node_match", &d.node_match);
        self.text("design.cluster_weight", &d.cluster_weight);
        self.text("design.cluster_graph", &d.cluster_graph);
        Ok(())
    }

    fn simulation(&mut self, s: &SimulationFlags) -> Result<(), StageError> {
        self.text("simulation.interference", &s.spillover);
        if let Some(ep) = &s.ep {
            let value = match ep.parse::<f64>() {
                Ok(p) => toml::Value::Float(p),
                Err(_) => toml::Value::String(ep.clone()),
            };
            self.0.push(("simulation.ep".into(), value));
        }
        self.int("simulation.runs", s.runs.map(|v| v as u64))
    }

    fn load(&self, file: Option<&Path>) -> Result<ExperimentConfig, StageError> {
        ExperimentConfig::load(file, &self.0).at(Stage::Config)
    }
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => std::io::stdout().write_all(bytes).map_err(|e| Error::Io {
            path: "<stdout>".into(),
            source: e,
        }),
    }
    .at(Stage::Output)
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json serializes"));
}

fn gen_sbm(a: &GenSbm) -> CliResult {
    let mut g = graph::generate_sbm(a.blocks, a.block_size, a.p_in, a.p_out, a.noise, a.seed).at(Stage::Graph)?;
    if let Some(metric) = &a.annotate {
        g = annotate_edge_spillover(g, metric.parse().at(Stage::Config)?).at(Stage::Graph)?;
    }
    let ids = IdMap::sequential(g.node_count());
    graph::save_graph(&a.out, &g, &ids, None).at(Stage::Output)?;
    print_json(&serde_json::json!({
        "nodes": g.node_count(),
        "edges": g.edge_count(),
        "prefix": a.out,
    }));
    Ok(())
}

fn design_cmd(a: &DesignCmd) -> CliResult {
    let mut o = Overrides::common(&a.common)?;
    o.design(&a.design)?;
    let mut config = o.load(a.common.config.as_deref())?;
    config.pin_graph_seed();
    let prepared = prepare_graph(&config.graph, config.similarity, config.seed).at(Stage::Graph)?;
    let plan = design::plan(&prepared.graph, &config.design, config.similarity, config.seed).at(Stage::Design)?;
    for w in &plan.warnings {
        log::warn!("{w}");
    }
    let assignment = plan.assign(run_assignment_seed(config.seed, 0));
    let hash = config.hash();
    let comments = [format!("config_hash={hash}"), format!("assignment_seed={}", assignment.seed)];
    write_output(a.out.as_deref(), &assignment_csv(&assignment, &prepared.ids, &comments))?;
    if a.out.is_some() {
        let l = &assignment.labeling;
        print_json(&serde_json::json!({
            "config_hash": hash,
            "method": plan.method.as_str(),
            "diagnostics": plan.diagnostics,
            "warnings": plan.warnings,
            "treated": l.count(graph::Arm::Treated),
            "control": l.count(graph::Arm::Control),
            "excluded": l.count(graph::Arm::Excluded),
        }));
    }
    Ok(())
}

fn simulate_cmd(a: &SimulateCmd) -> CliResult {
    let mut o = Overrides::common(&a.common)?;
    o.simulation(&a.simulation)?;
    let mut config = o.load(a.common.config.as_deref())?;
    config.pin_graph_seed();
    let prepared = prepare_graph(&config.graph, config.similarity, config.seed).at(Stage::Graph)?;
    let (labeling, _) = read_assignment_csv(&a.assignment, &prepared.ids).at(Stage::Config)?;
    let outcomes = simulate_fixed(&prepared.graph, &labeling, &config.simulation, config.seed).at(Stage::Simulation)?;
    let bytes = outcomes_csv(
        std::iter::repeat(&labeling).zip(&outcomes),
        &prepared.ids,
        &config.hash(),
    );
    write_output(a.out.as_deref(), &bytes)
}

fn evaluate_cmd(a: &EvaluateCmd) -> CliResult {
    let mut o = Overrides::common(&a.common)?;
    o.text("evaluation.denominator", &a.denominator);
    let mut config = o.load(a.common.config.as_deref())?;
    config.pin_graph_seed();
    let prepared = prepare_graph(&config.graph, config.similarity, config.seed).at(Stage::Graph)?;
    let runs = read_outcomes_csv(&a.outcomes, &prepared.ids).at(Stage::Config)?;
    let records: Vec<RunRecord<'_>> = runs
        .iter()
        .map(|(labeling, outcome)| RunRecord { labeling, outcome })
        .collect();
    let report = evaluate_runs(
        &prepared.graph,
        &a.label,
        &records,
        config.simulation.true_tte(),
        config.evaluation.denominator,
    )
    .at(Stage::Evaluation)?;
    let hash = config.hash();
    let json = metrics_json(&report, &hash, None, &[]);
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.clone(), source: e }).at(Stage::Output)?;
        write_output(Some(&dir.join("metrics.json")), &json)?;
        write_output(Some(&dir.join("metrics.csv")), &metrics_csv(&report, &hash))?;
    }
    write_output(None, &json)
}

fn out_dir(config: &ExperimentConfig, flag: &Option<PathBuf>) -> Option<PathBuf> {
    flag.clone().or_else(|| config.output.dir.clone())
}

fn run_cmd(a: &RunCmd) -> CliResult {
    let mut o = Overrides::common(&a.common)?;
    o.design(&a.design)?;
    o.simulation(&a.simulation)?;
    o.text("evaluation.denominator", &a.denominator);
    let config = o.load(a.common.config.as_deref())?;
    let (prepared, result) = experiment::run(&config)?;
    if let Some(dir) = out_dir(&config, &a.out) {
        write_run(&dir, &prepared.ids, &result).at(Stage::Output)?;
    }
    write_output(None, &metrics_json(&result.report, &result.config_hash, Some(&result.diagnostics), &result.warnings))
}

fn sweep_cmd(a: &SweepCmd) -> CliResult {
    let o = Overrides::common(&a.common)?;
    let config = o.load(a.common.config.as_deref())?;
    let workers = experiment::workers_from_env().at(Stage::Config)?;
    let dir = out_dir(&config, &a.out);
    let result = experiment::sweep(&config, dir.as_deref(), workers)?;
    let m = &result.manifest;
    print_json(&serde_json::json!({
        "config_hash": m.config_hash,
        "cells": m.cell_count,
        "ok": m.ok,
        "rejected": m.rejected,
        "collapsed": m.collapsed,
        "failed": m.failed,
    }));
    if dir.is_none() {
        write_output(None, &result.aggregate_csv)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenSbm(a) => gen_sbm(a),
        Command::Design(a) => design_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
