//! C interface to cmatch.
//!
//! Graphs and designs are opaque handles created by `cm_*` constructors and
//! released with the matching `cm_*_free`. Every fallible call returns a
//! [`CmStatus`]; on failure `cm_last_error_message` describes the error for
//! the calling thread. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cmatch::design::{self, DesignAssignment, DesignConfig, DesignPlan};
use cmatch::evaluation::{evaluate_runs, CutDenominator, RunRecord};
use cmatch::experiment::run_assignment_seed;
use cmatch::graph::{self, Arm, AttributedGraph};
use cmatch::similarity::{annotate_edge_spillover, SimilarityMetric};
use cmatch::simulation::{simulate, OutcomeConfig};
use cmatch::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    InvalidGraph = 5,
    MissingFeatures = 6,
    MissingWeights = 7,
    IncompatibleSchemes = 8,
    EmptyArm = 9,
    Config = 10,
    OutOfRange = 11,
    Internal = 12,
    Panic = 13,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmArm {
    Control = 0,
    Treated = 1,
    Excluded = 2,
}

/// Aggregate metrics of a simulated evaluation. Values that do not apply
/// (no edge weights, no features) are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CmMetrics {
    pub runs: u64,
    pub true_tte: f64,
    pub mean_estimate: f64,
    pub rmse: f64,
    pub covariate_distance: f64,
    pub crossing_edge_fraction: f64,
    pub crossing_weight_fraction: f64,
    pub theta_hat: f64,
    pub treated_count: u64,
    pub control_count: u64,
    pub excluded_count: u64,
}

/// Opaque graph handle.
pub struct CmGraph {
    graph: AttributedGraph,
}

/// Opaque design handle: the planned structure plus the assignment drawn
/// from it.
pub struct CmDesign {
    plan: DesignPlan,
    assignment: DesignAssignment,
    seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
}

struct Failure(CmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => CmStatus::Io,
            Error::Parse { .. } => CmStatus::Parse,
            Error::InvalidGraph(_) => CmStatus::InvalidGraph,
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::TooLarge { .. } => {
                CmStatus::InvalidArgument
            }
            Error::MissingFeatures => CmStatus::MissingFeatures,
            Error::MissingWeights => CmStatus::MissingWeights,
            Error::IncompatibleSchemes(_) => CmStatus::IncompatibleSchemes,
            Error::EmptyArm { .. } | Error::NoEdges | Error::EmptyInput(_) => CmStatus::EmptyArm,
            Error::Config(_) => CmStatus::Config,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: CmStatus, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CmStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(&format!("internal panic: {message}"));
            CmStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(CmStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CmStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(CmStatus::NullPointer, format!("{what} is null")))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(CmStatus::NullPointer, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn metric(name: Option<&str>) -> Result<SimilarityMetric, Failure> {
    Ok(name.map(str::parse).transpose()?.unwrap_or_default())
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next cmatch call on the same thread.
#[no_mangle]
pub extern "C" fn cm_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generates a stochastic block model graph with one-hot block attributes
/// and similarity edge weights (L2-based).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn cm_graph_generate_sbm(
    blocks: usize,
    block_size: usize,
    p_in: f64,
    p_out: f64,
    attr_noise: f64,
    seed: u64,
    out: *mut *mut CmGraph,
) -> CmStatus {
    guard(|| {
        let g = graph::generate_sbm(blocks, block_size, p_in, p_out, attr_noise, seed)?;
        let g = annotate_edge_spillover(g, SimilarityMetric::L2Based)?;
        store(out, CmGraph { graph: g })
    })
}

/// Loads an edge list and an optional attribute CSV (`attributes` may be
/// null). Node indices follow the lexicographic order of the node ids.
///
/// # Safety
/// `edges` and a non-null `attributes` must be NUL-terminated strings; `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn cm_graph_load(
    edges: *const c_char,
    attributes: *const c_char,
    out: *mut *mut CmGraph,
) -> CmStatus {
    guard(|| {
        let edges = text(edges, "edges path")?;
        let attributes = optional_text(attributes, "attributes path")?;
        let files = graph::load_graph(edges, attributes.map(Path::new))?;
        store(out, CmGraph { graph: files.graph })
    })
}

/// # Safety
/// `graph` must be null or a handle from a `cm_graph_*` constructor that has
/// not been freed.
#[no_mangle]
pub unsafe extern "C" fn cm_graph_free(graph: *mut CmGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// Node count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_graph_node_count(graph: *const CmGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.node_count())
}

/// Edge count, or 0 for a null handle.
///
/// # Safety
/// `graph` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_graph_edge_count(graph: *const CmGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.graph.edge_count())
}

/// Replaces the edge weights with endpoint similarity under `metric`
/// ("l2", "cosine" or "jaccard"; null means "l2").
///
/// # Safety
/// `graph` must be a live handle; a non-null `metric` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cm_graph_annotate(graph: *mut CmGraph, metric_name: *const c_char) -> CmStatus {
    guard(|| {
        let g = graph
            .as_mut()
            .ok_or_else(|| fail(CmStatus::NullPointer, "graph is null"))?;
        let m = metric(optional_text(metric_name, "metric")?)?;
        let annotated = annotate_edge_spillover(g.graph.clone(), m)?;
        g.graph = annotated;
        Ok(())
    })
}

/// Plans a design from a JSON design config such as
/// `{"method": "cmatch", "cluster_weight": "mss"}` (null or "{}" for the
/// defaults) and draws its first assignment.
///
/// # Safety
/// `graph` must be a live handle, string arguments null or NUL-terminated,
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_design_from_json(
    graph: *const CmGraph,
    config_json: *const c_char,
    metric_name: *const c_char,
    seed: u64,
    out: *mut *mut CmDesign,
) -> CmStatus {
    guard(|| {
        let g = reference(graph, "graph")?;
        let config: DesignConfig = match optional_text(config_json, "design config")? {
            Some(json) => serde_json::from_str(json)
                .map_err(|e| fail(CmStatus::Config, format!("design config: {e}")))?,
            None => DesignConfig::default(),
        };
        let m = metric(optional_text(metric_name, "metric")?)?;
        let plan = design::plan(&g.graph, &config, m, seed)?;
        let assignment = plan.assign(run_assignment_seed(seed, 0));
        store(out, CmDesign { plan, assignment, seed })
    })
}

/// # Safety
/// `design` must be null or a live handle from `cm_design_from_json`.
#[no_mangle]
pub unsafe extern "C" fn cm_design_free(design: *mut CmDesign) {
    if !design.is_null() {
        drop(Box::from_raw(design));
    }
}

fn c_arm(arm: Arm) -> CmArm {
    match arm {
        Arm::Control => CmArm::Control,
        Arm::Treated => CmArm::Treated,
        Arm::Excluded => CmArm::Excluded,
    }
}

/// Arm of one node in the drawn assignment.
///
/// # Safety
/// `design` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_design_arm(design: *const CmDesign, node: usize, out: *mut CmArm) -> CmStatus {
    guard(|| {
        let d = reference(design, "design")?;
        let labeling = &d.assignment.labeling;
        if node >= labeling.len() {
            return Err(fail(
                CmStatus::OutOfRange,
                format!("node {node} is out of range for {} nodes", labeling.len()),
            ));
        }
        if out.is_null() {
            return Err(fail(CmStatus::NullPointer, "output pointer is null"));
        }
        *out = c_arm(labeling.arm(node));
        Ok(())
    })
}

/// Copies every node's arm into `out`, which must hold `len` entries;
/// `len` must equal the node count.
///
/// # Safety
/// `design` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn cm_design_arms(design: *const CmDesign, out: *mut CmArm, len: usize) -> CmStatus {
    guard(|| {
        let d = reference(design, "design")?;
        let arms = d.assignment.labeling.arms();
        if len != arms.len() {
            return Err(fail(
                CmStatus::InvalidArgument,
                format!("buffer holds {len} entries for {} nodes", arms.len()),
            ));
        }
        if out.is_null() {
            return Err(fail(CmStatus::NullPointer, "output pointer is null"));
        }
        let slots = std::slice::from_raw_parts_mut(out, len);
        for (slot, &arm) in slots.iter_mut().zip(arms) {
            *slot = c_arm(arm);
        }
        Ok(())
    })
}

/// Cluster count of the design, or 0 for a null handle.
///
/// # Safety
/// `design` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cm_design_cluster_count(design: *const CmDesign) -> usize {
    design.as_ref().map_or(0, |d| d.plan.clustering.count())
}

/// Simulates `runs` outcome rounds and evaluates them. Each run draws a
/// fresh assignment from the design, so run 0 uses the assignment reported
/// by `cm_design_arm`. `simulation_json` is an outcome config such as
/// `{"interference": "direct", "ep": 0.1, "runs": 20}` (null for defaults).
///
/// # Safety
/// `graph` and `design` must be live handles, `simulation_json` null or
/// NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cm_evaluate(
    graph: *const CmGraph,
    design: *const CmDesign,
    simulation_json: *const c_char,
    out: *mut CmMetrics,
) -> CmStatus {
    guard(|| {
        let g = &reference(graph, "graph")?.graph;
        let d = reference(design, "design")?;
        if out.is_null() {
            return Err(fail(CmStatus::NullPointer, "output pointer is null"));
        }
        if g.node_count() != d.assignment.labeling.len() {
            return Err(fail(CmStatus::InvalidArgument, "design was planned on a different graph"));
        }
        let cfg: OutcomeConfig = match optional_text(simulation_json, "simulation config")? {
            Some(json) => serde_json::from_str(json)
                .map_err(|e| fail(CmStatus::Config, format!("simulation config: {e}")))?,
            None => OutcomeConfig::default(),
        };
        cfg.validate()?;
        let assignments: Vec<DesignAssignment> = (0..cfg.runs as u64)
            .map(|s| d.plan.assign(run_assignment_seed(d.seed, s)))
            .collect();
        let outcomes = assignments
            .iter()
            .enumerate()
            .map(|(s, a)| simulate(g, &a.labeling, &cfg, d.seed, s as u64))
            .collect::<Result<Vec<_>, _>>()?;
        let records: Vec<RunRecord<'_>> = assignments
            .iter()
            .zip(&outcomes)
            .map(|(a, outcome)| RunRecord {
                labeling: &a.labeling,
                outcome,
            })
            .collect();
        let r = evaluate_runs(g, d.plan.method.as_str(), &records, cfg.true_tte(), CutDenominator::All)?;
        *out = CmMetrics {
            runs: r.runs as u64,
            true_tte: r.true_tte,
            mean_estimate: r.mean_estimate,
            rmse: r.rmse,
            covariate_distance: r.covariate_distance,
            crossing_edge_fraction: r.crossing_edge_fraction,
            crossing_weight_fraction: r.crossing_weight_fraction.unwrap_or(f64::NAN),
            theta_hat: r.theta_hat.unwrap_or(f64::NAN),
            treated_count: r.treated_count as u64,
            control_count: r.control_count as u64,
            excluded_count: r.excluded_count as u64,
        };
        Ok(())
    })
}
