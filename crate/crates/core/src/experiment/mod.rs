//! Config-driven experiments: one run (design, simulated runs, evaluation)
//! or a sweep over a grid of config values.

mod config;
mod run;
mod sweep;

pub use config::{
    parse_override, set_dotted, EvaluationConfig, ExperimentConfig, GraphSpec, GridAxis, OutputConfig, SbmSpec,
};
pub use run::{
    execute, metrics_csv, metrics_json, outcomes_csv, prepare_graph, read_outcomes_csv, run, run_assignment_seed,
    simulate_fixed, write_run, AtStage, PreparedGraph, RunResult, Stage, StageError,
};
pub use sweep::{sweep, workers_from_env, CellRecord, CellStatus, SweepManifest, SweepResult, WORKERS_ENV};
