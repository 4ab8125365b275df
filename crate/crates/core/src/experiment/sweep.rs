use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{set_dotted, ExperimentConfig};
use super::run::{execute, prepare_graph, write_run, AtStage, PreparedGraph, Stage, StageError};
use crate::clustering::ClustererConfig;
use crate::design::{ClusterWeightScheme, DesignConfig, Method, NodeMatchScheme};
use crate::error::{Error, Result};
use crate::evaluation::MetricsReport;
use crate::graph::write_atomically;
use crate::seed;

/// Environment variable holding the sweep worker count.
pub const WORKERS_ENV: &str = "CMATCH_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    /// Failed validation; never run.
    Rejected,
    /// Raised an error while running.
    Failed,
    /// Identical, after dropping settings the method ignores, to an earlier
    /// cell; not run again.
    Collapsed,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub index: usize,
    pub seed: u64,
    pub settings: Vec<(String, String)>,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepManifest {
    pub config_hash: String,
    pub axes: Vec<String>,
    pub cell_count: usize,
    pub ok: usize,
    pub rejected: usize,
    pub failed: usize,
    pub collapsed: usize,
    pub cells: Vec<CellRecord>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub manifest: SweepManifest,
    /// Reports of the cells that ran, in cell order.
    pub reports: Vec<(usize, MetricsReport)>,
    pub aggregate_csv: Vec<u8>,
}

struct Cell {
    record: CellRecord,
    config: Option<ExperimentConfig>,
}

fn display_value(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Resets the settings the chosen method never reads, so cells that differ
/// only there are recognised as the same design. The cluster weight `e`
/// compares mean feature vectors and never uses node matches.
fn canonical_design(d: &DesignConfig) -> DesignConfig {
    let defaults = DesignConfig::default();
    let mut c = d.clone();
    if c.method != Method::Cmatch {
        c.node_match = defaults.node_match;
        c.cluster_weight = defaults.cluster_weight;
        c.cluster_graph = defaults.cluster_graph;
    } else if c.cluster_weight == ClusterWeightScheme::E {
        c.node_match = NodeMatchScheme::None;
    }
    if !matches!(c.method, Method::Cmatch | Method::Cr | Method::Cbr) {
        c.clusterer = ClustererConfig::default();
    }
    if c.method != Method::Match {
        c.match_cutoff = defaults.match_cutoff;
        c.match_top_k = defaults.match_top_k;
    }
    c
}

fn rejection(stage: Stage, error: Error) -> serde_json::Value {
    StageError { stage, error }.details()
}

/// Expands the grid into cells in row-major order (last axis fastest) and
/// validates each one. Nothing is computed here.
fn expand(base: &ExperimentConfig) -> Result<Vec<Cell>> {
    if base.grid.iter().any(|a| a.key == "seed") {
        return Err(Error::Config(
            "seed cannot be a grid axis; every cell derives its own seed".into(),
        ));
    }
    if let Some(a) = base.grid.iter().find(|a| a.values.is_empty()) {
        return Err(Error::Config(format!("grid axis '{}' has no values", a.key)));
    }
    let mut root = base.to_value()?;
    root.as_table_mut().expect("config is a table").remove("grid");
    let sizes: Vec<usize> = base.grid.iter().map(|a| a.values.len()).collect();
    let count: usize = sizes.iter().product();
    let mut canonical_seen: HashMap<String, usize> = HashMap::new();
    let mut cells = Vec::with_capacity(count);
    for index in 0..count {
        let mut rest = index;
        let mut choice = vec![0; sizes.len()];
        for (slot, &size) in choice.iter_mut().zip(&sizes).rev() {
            *slot = rest % size;
            rest /= size;
        }
        let settings: Vec<(String, String)> = base
            .grid
            .iter()
            .zip(&choice)
            .map(|(axis, &c)| (axis.key.clone(), display_value(&axis.values[c])))
            .collect();
        let cell_seed = seed::derive_config_seed(base.seed, "cell", index as u64);
        let mut record = CellRecord {
            index,
            seed: cell_seed,
            settings,
            status: CellStatus::Ok,
            config_hash: None,
            duplicate_of: None,
            error: None,
        };
        let mut value = root.clone();
        let parsed = base
            .grid
            .iter()
            .zip(&choice)
            .try_for_each(|(axis, &c)| set_dotted(&mut value, &axis.key, axis.values[c].clone()))
            .and_then(|()| ExperimentConfig::from_value(value))
            .and_then(|mut config| {
                config.seed = cell_seed;
                config.validate()?;
                config.design = canonical_design(&config.design);
                Ok(config)
            });
        let config = match parsed {
            Ok(config) => config,
            Err(e) => {
                record.status = CellStatus::Rejected;
                record.error = Some(rejection(Stage::Config, e));
                cells.push(Cell { record, config: None });
                continue;
            }
        };
        let mut unseeded = config.clone();
        unseeded.seed = 0;
        match canonical_seen.get(&unseeded.hash()) {
            Some(&first) => {
                record.status = CellStatus::Collapsed;
                record.duplicate_of = Some(first);
                cells.push(Cell { record, config: None });
            }
            None => {
                canonical_seen.insert(unseeded.hash(), index);
                record.config_hash = Some(config.hash());
                cells.push(Cell {
                    record,
                    config: Some(config),
                });
            }
        }
    }
    Ok(cells)
}

/// Worker count from [`WORKERS_ENV`]; unset or 0 lets the pool decide.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV}='{v}' is not a worker count"))),
    }
}

fn graph_key(c: &ExperimentConfig) -> String {
    serde_json::to_string(&(&c.graph, c.similarity)).expect("graph spec serializes")
}

/// Runs every cell of `base.grid`. A cell failing does not stop the others;
/// it is listed in the manifest instead. With `out`, each cell's files go to
/// `out/cells/<index>/`, then `aggregate.csv` and `manifest.json` to `out`.
pub fn sweep(base: &ExperimentConfig, out: Option<&Path>, workers: usize) -> std::result::Result<SweepResult, StageError> {
    let mut base = base.clone();
    base.pin_graph_seed();
    let base_hash = base.hash();
    let mut cells = expand(&base).at(Stage::Config)?;

    let mut graphs: HashMap<String, std::result::Result<PreparedGraph, serde_json::Value>> = HashMap::new();
    for cell in &cells {
        if let Some(c) = &cell.config {
            graphs.entry(graph_key(c)).or_insert_with(|| {
                prepare_graph(&c.graph, c.similarity, c.seed).map_err(|e| rejection(Stage::Graph, e))
            });
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
        .at(Stage::Config)?;
    let outcomes: Vec<Option<std::result::Result<MetricsReport, serde_json::Value>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let config = cell.config.as_ref()?;
                let prepared = match &graphs[&graph_key(config)] {
                    Ok(p) => p,
                    Err(e) => return Some(Err(e.clone())),
                };
                let result = execute(config, prepared).and_then(|r| {
                    if let Some(out) = out {
                        let dir = out.join("cells").join(cell.record.index.to_string());
                        write_run(&dir, &prepared.ids, &r).at(Stage::Output)?;
                        let text = config.to_toml_string().at(Stage::Output)?;
                        write_atomically(&dir.join("config.toml"), text.as_bytes()).at(Stage::Output)?;
                    }
                    Ok(r.report)
                });
                Some(result.map_err(|e| {
                    log::warn!("cell {} failed: {e}", cell.record.index);
                    e.details()
                }))
            })
            .collect()
    });

    let mut reports = Vec::new();
    for (cell, outcome) in cells.iter_mut().zip(outcomes) {
        match outcome {
            None => {}
            Some(Ok(report)) => reports.push((cell.record.index, report)),
            Some(Err(e)) => {
                cell.record.status = CellStatus::Failed;
                cell.record.error = Some(e);
            }
        }
    }
    let count = |s: CellStatus| cells.iter().filter(|c| c.record.status == s).count();
    let manifest = SweepManifest {
        config_hash: base_hash.clone(),
        axes: base.grid.iter().map(|a| a.key.clone()).collect(),
        cell_count: cells.len(),
        ok: count(CellStatus::Ok),
        rejected: count(CellStatus::Rejected),
        failed: count(CellStatus::Failed),
        collapsed: count(CellStatus::Collapsed),
        cells: cells.into_iter().map(|c| c.record).collect(),
    };
    let aggregate_csv = aggregate(&base_hash, &manifest, &reports);
    if let Some(out) = out {
        let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        json.push(b'\n');
        write_atomically(&out.join("manifest.json"), &json).at(Stage::Output)?;
        write_atomically(&out.join("aggregate.csv"), &aggregate_csv).at(Stage::Output)?;
    }
    Ok(SweepResult {
        manifest,
        reports,
        aggregate_csv,
    })
}

/// One row per cell that ran: index, seed, hash, axis values, metrics.
fn aggregate(base_hash: &str, manifest: &SweepManifest, reports: &[(usize, MetricsReport)]) -> Vec<u8> {
    let mut out = format!("# config_hash={base_hash}\n").into_bytes();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = ["cell", "seed", "config_hash"]
        .into_iter()
        .chain(manifest.axes.iter().map(String::as_str))
        .chain(MetricsReport::CSV_COLUMNS)
        .collect();
    w.write_record(&header).expect("write to memory");
    for (index, report) in reports {
        let cell = &manifest.cells[*index];
        let row: Vec<String> = [
            index.to_string(),
            cell.seed.to_string(),
            cell.config_hash.clone().unwrap_or_default(),
        ]
        .into_iter()
        .chain(cell.settings.iter().map(|(_, v)| v.clone()))
        .chain(report.csv_fields())
        .collect();
        w.write_record(&row).expect("write to memory");
    }
    out.extend(w.into_inner().expect("flush to memory"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(grid: &str) -> ExperimentConfig {
        let text = format!(
            r#"
            seed = 5
            [graph.sbm]
            blocks = 3
            block_size = 10
            p_in = 0.4
            p_out = 0.02
            attr_noise = 0.2
            [design]
            method = "randomized"
            [simulation]
            runs = 2
            {grid}
            "#
        );
        ExperimentConfig::from_toml_str(&text, &[], None).unwrap()
    }

    #[test]
    fn empty_grid_is_one_base_run() {
        let r = sweep(&base(""), None, 1).unwrap();
        assert_eq!(r.manifest.cell_count, 1);
        assert_eq!(r.reports.len(), 1);
    }

    #[test]
    fn one_axis_gives_one_row_per_value() {
        let grid = "[[grid]]\nkey = \"simulation.ep\"\nvalues = [0.1, 0.5, \"edge-weight\"]";
        let r = sweep(&base(grid), None, 2).unwrap();
        assert_eq!(r.reports.len(), 3);
        let text = String::from_utf8(r.aggregate_csv).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains(",edge-weight,"));
    }

    #[test]
    fn ignored_settings_collapse() {
        let grid = "[[grid]]\nkey = \"design.node_match\"\nvalues = [\"tnm0\", \"bnm\"]";
        let r = sweep(&base(grid), None, 1).unwrap();
        assert_eq!(r.manifest.collapsed, 1);
        assert_eq!(r.manifest.cells[1].duplicate_of, Some(0));
    }

    #[test]
    fn seed_axis_is_refused() {
        let grid = "[[grid]]\nkey = \"seed\"\nvalues = [1, 2]";
        assert_eq!(sweep(&base(grid), None, 1).unwrap_err().stage, Stage::Config);
    }

    #[test]
    fn failed_cells_do_not_abort() {
        let grid = "[[grid]]\nkey = \"graph.sbm.blocks\"\nvalues = [0, 3]";
        let r = sweep(&base(grid), None, 1).unwrap();
        assert_eq!(r.manifest.failed, 1);
        assert_eq!(r.manifest.ok, 1);
        assert_eq!(r.manifest.cells[0].error.as_ref().unwrap()["stage"], "graph");
    }
}
