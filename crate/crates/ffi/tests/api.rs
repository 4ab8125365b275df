use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use cmatch_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cm_last_error_message()) }.to_string_lossy().into_owned()
}

fn sbm() -> *mut CmGraph {
    let mut g = ptr::null_mut();
    let status = unsafe { cm_graph_generate_sbm(4, 25, 0.3, 0.01, 0.2, 7, &mut g) };
    assert_eq!(status, CmStatus::Ok, "{}", last_error());
    g
}

fn design(g: *const CmGraph, json: &str, seed: u64) -> Result<*mut CmDesign, CmStatus> {
    let json = CString::new(json).unwrap();
    let mut d = ptr::null_mut();
    match unsafe { cm_design_from_json(g, json.as_ptr(), ptr::null(), seed, &mut d) } {
        CmStatus::Ok => Ok(d),
        s => Err(s),
    }
}

#[test]
fn graph_handles_report_sizes() {
    let g = sbm();
    unsafe {
        assert_eq!(cm_graph_node_count(g), 100);
        assert!(cm_graph_edge_count(g) > 0);
        assert_eq!(cm_graph_node_count(ptr::null()), 0);
        let cosine = CString::new("cosine").unwrap();
        assert_eq!(cm_graph_annotate(g, cosine.as_ptr()), CmStatus::Ok);
        let bogus = CString::new("manhattan").unwrap();
        assert_eq!(cm_graph_annotate(g, bogus.as_ptr()), CmStatus::InvalidArgument);
        assert!(last_error().contains("manhattan"));
        cm_graph_free(g);
        cm_graph_free(ptr::null_mut());
    }
}

#[test]
fn designs_assign_every_node() {
    let g = sbm();
    let d = design(g, r#"{"method": "cmatch"}"#, 5).unwrap();
    unsafe {
        let n = cm_graph_node_count(g);
        let mut arms = vec![CmArm::Excluded; n];
        assert_eq!(cm_design_arms(d, arms.as_mut_ptr(), n), CmStatus::Ok);
        for (i, &a) in arms.iter().enumerate() {
            let mut one = CmArm::Excluded;
            assert_eq!(cm_design_arm(d, i, &mut one), CmStatus::Ok);
            assert_eq!(one, a);
        }
        let mut one = CmArm::Excluded;
        assert_eq!(cm_design_arm(d, n, &mut one), CmStatus::OutOfRange);
        assert_eq!(cm_design_arms(d, arms.as_mut_ptr(), n - 1), CmStatus::InvalidArgument);
        assert!(cm_design_cluster_count(d) >= 2);
        let treated = arms.iter().filter(|&&a| a == CmArm::Treated).count();
        let control = arms.iter().filter(|&&a| a == CmArm::Control).count();
        assert!(treated > 0 && control > 0);
        cm_design_free(d);
        cm_graph_free(g);
    }
}

#[test]
fn evaluation_matches_the_library() {
    let g = sbm();
    let d = design(g, r#"{"method": "randomized"}"#, 9).unwrap();
    let sim = CString::new(r#"{"runs": 6, "interference": "direct", "ep": 0.5}"#).unwrap();
    let mut m = std::mem::MaybeUninit::<CmMetrics>::uninit();
    let m = unsafe {
        assert_eq!(cm_evaluate(g, d, sim.as_ptr(), m.as_mut_ptr()), CmStatus::Ok, "{}", last_error());
        m.assume_init()
    };
    assert_eq!(m.runs, 6);
    assert_eq!(m.excluded_count, 0);
    assert!((m.true_tte - 0.2).abs() < 1e-12);
    assert!(m.rmse >= 0.0);
    assert!((0.0..=1.0).contains(&m.crossing_edge_fraction));
    assert!(!m.crossing_weight_fraction.is_nan());
    unsafe {
        cm_design_free(d);
        cm_graph_free(g);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let g = sbm();
    assert_eq!(
        design(g, r#"{"node_match": "bnm", "cluster_weight": "mss"}"#, 1).unwrap_err(),
        CmStatus::IncompatibleSchemes
    );
    assert!(last_error().contains("bnm"));
    assert_eq!(design(g, r#"{"methd": "cbr"}"#, 1).unwrap_err(), CmStatus::Config);
    assert_eq!(design(ptr::null(), "{}", 1).unwrap_err(), CmStatus::NullPointer);
    let mut out = ptr::null_mut();
    let missing = CString::new("/nonexistent/graph.edges").unwrap();
    assert_eq!(unsafe { cm_graph_load(missing.as_ptr(), ptr::null(), &mut out) }, CmStatus::Io);
    assert!(out.is_null());
    unsafe { cm_graph_free(g) };
}

#[test]
fn loads_edge_lists() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("g.edges");
    std::fs::write(&edges, "a b\nb c\nc a\n").unwrap();
    let path = CString::new(edges.to_str().unwrap()).unwrap();
    let mut g = ptr::null_mut();
    unsafe {
        assert_eq!(cm_graph_load(path.as_ptr(), ptr::null(), &mut g), CmStatus::Ok);
        assert_eq!(cm_graph_node_count(g), 3);
        assert_eq!(cm_graph_edge_count(g), 3);
        cm_graph_free(g);
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(cm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn have(tool: &str) -> bool {
    Command::new(tool).arg("--version").output().is_ok()
}

/// Compiles a C program against the generated header and the static
/// library built for this test run, then runs it.
#[test]
fn c_program_links_and_runs() {
    if !have("cc") {
        eprintln!("no C compiler; skipping");
        return;
    }
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let lib = profile_dir.join("libcmatch_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let status = Command::new("cc")
        .arg(crate_dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(crate_dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "C program failed: {}{}",
        String::from_utf8_lossy(&run.stdout),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("treated"));
}
