use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use hyperspde_ffi::*;

fn last_error() -> String {
    let p = hs_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn preset_roundtrip_and_errors() {
    unsafe {
        let mut m = ptr::null_mut();
        let name = CString::new("plate_weak").unwrap();
        assert_eq!(hs_model_preset(name.as_ptr(), &mut m), HsStatus::Ok);
        assert_eq!(hs_model_dim(m), 2);
        let mut p = [0.0; 2];
        assert_eq!(hs_model_parameters(m, p.as_mut_ptr(), 2), HsStatus::Ok);
        assert_eq!(p, [-0.3, -0.3]);
        assert_eq!(hs_model_parameters(m, p.as_mut_ptr(), 1), HsStatus::InvalidArgument);
        let newp = [-0.5, -0.2];
        assert_eq!(hs_model_set_parameters(m, newp.as_ptr(), 2), HsStatus::Ok);
        assert_eq!(hs_model_parameters(m, p.as_mut_ptr(), 2), HsStatus::Ok);
        assert_eq!(p, newp);
        hs_model_free(m);

        let bad = CString::new("membrane").unwrap();
        assert_eq!(hs_model_preset(bad.as_ptr(), &mut m), HsStatus::InvalidModel);
        assert!(last_error().contains("membrane"));
        assert_eq!(hs_model_preset(ptr::null(), &mut m), HsStatus::InvalidArgument);
        assert_eq!(hs_model_preset(name.as_ptr(), ptr::null_mut()), HsStatus::InvalidArgument);
        assert_eq!(hs_model_dim(ptr::null()), 0);
        hs_model_free(ptr::null_mut());
    }
}

#[test]
fn model_from_toml() {
    unsafe {
        let doc = CString::new(
            "domain_length = 1.0\nhorizon = 1.0\nelastic = [{ exponent = 1.0, coeff = -0.5 }]\ndamping = [{ exponent = 0.0, coeff = -0.1 }]",
        )
        .unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(hs_model_from_toml(doc.as_ptr(), &mut m), HsStatus::Ok);
        assert_eq!(hs_model_dim(m), 2);
        hs_model_free(m);
        let bad = CString::new("domain_length = \"one\"").unwrap();
        assert_eq!(hs_model_from_toml(bad.as_ptr(), &mut m), HsStatus::InvalidModel);
    }
}

#[test]
fn simulate_and_estimate() {
    unsafe {
        let name = CString::new("plate_structural").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(hs_model_preset(name.as_ptr(), &mut m), HsStatus::Ok);
        let mut paths = ptr::null_mut();
        assert_eq!(hs_simulate(m, 128, 1000, HsIntegrator::Exact, 3, 0, &mut paths), HsStatus::Ok);
        let mut u1 = vec![0.0; 1001];
        assert_eq!(hs_paths_mode(paths, 0, 1, u1.as_mut_ptr(), u1.len()), HsStatus::Ok);
        assert_eq!(u1[0], 0.0);
        assert!(u1.iter().any(|x| *x != 0.0));
        assert_eq!(hs_paths_mode(paths, 0, 129, u1.as_mut_ptr(), u1.len()), HsStatus::InvalidArgument);

        let (mut est, mut z) = ([0.0; 2], [0.0; 2]);
        assert_eq!(hs_estimate(m, paths, 0.1, 4, est.as_mut_ptr(), z.as_mut_ptr(), 2), HsStatus::Ok);
        assert!(est.iter().all(|x| x.is_finite()));
        assert_eq!(
            hs_estimate(m, paths, 0.1, 40, est.as_mut_ptr(), ptr::null_mut(), 2),
            HsStatus::Placement
        );
        assert!(last_error().contains("40"));

        let mut again = ptr::null_mut();
        assert_eq!(hs_simulate(m, 128, 1000, HsIntegrator::Exact, 3, 0, &mut again), HsStatus::Ok);
        let mut est2 = [0.0; 2];
        assert_eq!(hs_estimate(m, again, 0.1, 4, est2.as_mut_ptr(), ptr::null_mut(), 2), HsStatus::Ok);
        assert_eq!(est, est2);
        hs_paths_free(again);
        hs_paths_free(paths);
        hs_model_free(m);
    }
}

#[test]
fn study_roundtrip() {
    unsafe {
        let doc = CString::new(
            "preset = \"plate_structural\"\ndeltas = [0.1, 0.07, 0.05]\nn_locations = 2\nreplicates = 2\nn_steps = 300\nk_max = 96\nestimator = \"decomposition\"",
        )
        .unwrap();
        let mut s = ptr::null_mut();
        assert_eq!(hs_study_from_toml(doc.as_ptr(), &mut s), HsStatus::Ok);
        let mut r = ptr::null_mut();
        assert_eq!(hs_study_run(s, &mut r), HsStatus::Ok);
        assert_eq!(hs_study_result_cells(r), 3);
        let mut x = 0.0;
        assert_eq!(hs_study_result_rmse(r, 0, 1, &mut x), HsStatus::Ok);
        assert!(x > 0.0);
        assert_eq!(hs_study_result_rmse(r, 3, 0, &mut x), HsStatus::InvalidArgument);
        assert_eq!(hs_study_result_slope(r, 0, &mut x), HsStatus::Ok);
        assert!(x.is_finite());
        let dir = tempfile::tempdir().unwrap();
        let d = CString::new(dir.path().to_str().unwrap()).unwrap();
        assert_eq!(hs_study_result_emit(r, d.as_ptr()), HsStatus::Ok);
        assert!(dir.path().join("plate_structural_rmse.svg").exists());
        hs_study_result_free(r);
        hs_study_free(s);

        let bad = CString::new("preset = \"plate_structural\"\ndeltas = [0.1]\nreplicates = 1").unwrap();
        assert_eq!(hs_study_from_toml(bad.as_ptr(), &mut s), HsStatus::InvalidModel);
    }
}

#[test]
fn constants() {
    assert_eq!(hs_c_constant(0.0, 2.0), 1.0);
    let v = unsafe { CStr::from_ptr(hs_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(dir.join("include/hyperspde.h")).unwrap();
    let src = std::fs::read_to_string(dir.join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 15);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

/// Compiles the C smoke test against the static library when a C compiler is available.
#[test]
fn c_smoke_test() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = std::env::var_os("CARGO_TARGET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| dir.join("../../target"));
    let profile_dir = std::env::current_exe()
        .ok()
        .and_then(|p| p.parent()?.parent().map(|p| p.to_path_buf()))
        .unwrap_or_else(|| target.join("debug"));
    let lib = profile_dir.join("libhyperspde_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping C smoke test: no static library or C compiler");
        return;
    }
    let out = tempfile::tempdir().unwrap();
    let exe = out.path().join("smoke");
    let status = Command::new("cc")
        .arg(dir.join("tests/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compile failed");
    let run = Command::new(&exe).output().unwrap();
    assert!(
        run.status.success(),
        "smoke exit {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("C(0,2) 1.0"));
}
