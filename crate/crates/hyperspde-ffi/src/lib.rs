//! C ABI over `hyperspde`.
//!
//! Every fallible call returns an [`HsStatus`]; on failure the message is kept
//! per thread and read with [`hs_last_error`]. Handles are opaque and owned by
//! the caller, who releases them with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use hyperspde::estimator::{c_constant, mle};
use hyperspde::experiments::{emit_report, run_mc_study, StudyConfig, StudyFile, StudyResult};
use hyperspde::kernels::KernelProfile;
use hyperspde::measurements::{extract_measurements, make_placement, DEFAULT_MARGIN_FRACTION};
use hyperspde::model::{ModelSpec, Preset};
use hyperspde::spectral_sim::{simulate, Integrator, ModePaths, SimOptions, TimeGrid};
use hyperspde::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or a too-small output buffer.
    InvalidArgument = 1,
    /// Model, parameter or configuration rejected.
    InvalidModel = 2,
    /// Location set infeasible at the requested resolution.
    Placement = 3,
    /// Covariance, conditioning or norm failure.
    Numerical = 4,
    Io = 5,
    /// Too many failed Monte-Carlo replicates.
    StudyFailed = 6,
    /// A Rust panic was caught at the boundary.
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsIntegrator {
    Exact = 0,
    Euler = 1,
}

impl From<HsIntegrator> for Integrator {
    fn from(i: HsIntegrator) -> Integrator {
        match i {
            HsIntegrator::Exact => Integrator::Exact,
            HsIntegrator::Euler => Integrator::Euler,
        }
    }
}

pub struct HsModel(ModelSpec);
pub struct HsPaths(ModePaths);
pub struct HsStudy(StudyConfig);
pub struct HsStudyResult(StudyResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HsStatus {
    match e {
        Error::InvalidModel(_)
        | Error::OutOfScope(_)
        | Error::Config(_)
        | Error::InvalidInput(_)
        | Error::Dimension(_)
        | Error::Range(_)
        | Error::NonzeroInitialCondition
        | Error::KmaxTooSmall { .. } => HsStatus::InvalidModel,
        Error::Placement { .. } | Error::Capacity { .. } => HsStatus::Placement,
        Error::Io { .. } => HsStatus::Io,
        Error::TooManyFailures { .. } => HsStatus::StudyFailed,
        _ => HsStatus::Numerical,
    }
}

struct Fail(HsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Fail {
        Fail(status_of(&e), e.to_string())
    }
}

fn invalid(msg: &str) -> Fail {
    Fail(HsStatus::InvalidArgument, msg.to_string())
}

/// Runs `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            HsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(invalid(&format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(&format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| invalid(&format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(invalid("output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn fill(out: *mut f64, len: usize, values: &[f64]) -> Result<(), Fail> {
    if out.is_null() || len < values.len() {
        return Err(invalid(&format!("output buffer needs {} doubles", values.len())));
    }
    std::slice::from_raw_parts_mut(out, values.len()).copy_from_slice(values);
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn hs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// `C(eta_1, T)` of the weak-damping asymptotic variance.
#[no_mangle]
pub extern "C" fn hs_c_constant(eta1: f64, horizon: f64) -> f64 {
    c_constant(eta1, horizon)
}

/// Model from a preset name (`wave_weak`, `plate_weak`, `plate_structural`).
///
/// # Safety
/// `name` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_model_preset(name: *const c_char, out: *mut *mut HsModel) -> HsStatus {
    guard(|| {
        let spec = Preset::from_name(str_arg(name, "name")?)?.spec();
        put(out, HsModel(spec))
    })
}

/// Model from a TOML document with the fields of a `[model]` table.
///
/// # Safety
/// `toml` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_model_from_toml(toml: *const c_char, out: *mut *mut HsModel) -> HsStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let spec: ModelSpec = ::toml::from_str(text).map_err(|e| Fail(HsStatus::InvalidModel, e.to_string()))?;
        spec.check_structure()?;
        put(out, HsModel(spec))
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_model_free(model: *mut HsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of parameters `p + q`.
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn hs_model_dim(model: *const HsModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.p() + m.0.q())
}

/// Writes `(theta, eta)` into `out[0..p+q]`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_model_parameters(model: *const HsModel, out: *mut f64, len: usize) -> HsStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        fill(out, len, &m.0.parameters())
    })
}

/// Replaces `(theta, eta)` with `params[0..p+q]`.
///
/// # Safety
/// `params` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_model_set_parameters(model: *mut HsModel, params: *const f64, len: usize) -> HsStatus {
    guard(|| {
        let m = model.as_mut().ok_or_else(|| invalid("model is null"))?;
        if params.is_null() {
            return Err(invalid("params is null"));
        }
        m.0 = m.0.with_parameters(std::slice::from_raw_parts(params, len))?;
        Ok(())
    })
}

/// Simulates one replicate with `k_max` modes on `n_steps` equal steps.
///
/// # Safety
/// `model` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_simulate(
    model: *const HsModel,
    k_max: usize,
    n_steps: usize,
    integrator: HsIntegrator,
    seed: u64,
    replicate: u64,
    out: *mut *mut HsPaths,
) -> HsStatus {
    guard(|| {
        let m = ref_arg(model, "model")?;
        let grid = TimeGrid::new(m.0.horizon, n_steps)?;
        let opts = SimOptions {
            record_increments: true,
            replicate,
            ..Default::default()
        };
        let paths = simulate(&m.0, k_max, grid, integrator.into(), seed, opts)?;
        put(out, HsPaths(paths))
    })
}

/// # Safety
/// `paths` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_paths_free(paths: *mut HsPaths) {
    if !paths.is_null() {
        drop(Box::from_raw(paths));
    }
}

/// Copies mode `k` (1-based) of `u` (`component = 0`) or `v` (`1`) at all `n_steps + 1` times.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_paths_mode(
    paths: *const HsPaths,
    component: u32,
    k: usize,
    out: *mut f64,
    len: usize,
) -> HsStatus {
    guard(|| {
        let p = &ref_arg(paths, "paths")?.0;
        if k == 0 || k > p.k_max || component > 1 {
            return Err(invalid(&format!("mode {k} / component {component} out of range")));
        }
        let vals: Vec<f64> = (0..=p.grid.n_steps)
            .map(|n| if component == 0 { p.u_mode(k, n) } else { p.v_mode(k, n) })
            .collect();
        fill(out, len, &vals)
    })
}

/// Estimate from `n_loc` equispaced bump-kernel measurements at resolution `delta`.
/// Writes `p + q` values to `estimate` and, if non-null, `p + q` standardized errors.
///
/// # Safety
/// Handles must be live; buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_estimate(
    model: *const HsModel,
    paths: *const HsPaths,
    delta: f64,
    n_loc: usize,
    estimate: *mut f64,
    standardized: *mut f64,
    len: usize,
) -> HsStatus {
    guard(|| {
        let m = &ref_arg(model, "model")?.0;
        let p = &ref_arg(paths, "paths")?.0;
        let l = m.domain_length;
        let placement = make_placement(n_loc, delta, l, DEFAULT_MARGIN_FRACTION * l)?;
        let prof = KernelProfile::bump();
        let ms = extract_measurements(p, &placement, &prof, m)?;
        let rep = mle(&ms, m, &prof)?;
        fill(estimate, len, &rep.estimate())?;
        if !standardized.is_null() {
            fill(standardized, len, &rep.standardized)?;
        }
        Ok(())
    })
}

/// Study from a TOML study file's contents.
///
/// # Safety
/// `toml` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_study_from_toml(toml: *const c_char, out: *mut *mut HsStudy) -> HsStatus {
    guard(|| {
        let cfg = StudyFile::parse(str_arg(toml, "toml")?)?.into_config()?;
        cfg.validate()?;
        put(out, HsStudy(cfg))
    })
}

/// # Safety
/// `study` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_study_free(study: *mut HsStudy) {
    if !study.is_null() {
        drop(Box::from_raw(study));
    }
}

/// Runs the Monte-Carlo study on the global thread pool.
///
/// # Safety
/// `study` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_study_run(study: *const HsStudy, out: *mut *mut HsStudyResult) -> HsStatus {
    guard(|| {
        let r = run_mc_study(&ref_arg(study, "study")?.0)?;
        put(out, HsStudyResult(r))
    })
}

/// # Safety
/// `result` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_study_result_free(result: *mut HsStudyResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Number of resolution cells.
///
/// # Safety
/// `result` must be live or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn hs_study_result_cells(result: *const HsStudyResult) -> usize {
    result.as_ref().map_or(0, |r| r.0.cells.len())
}

/// RMSE of parameter `param` (zero-based) in cell `cell`.
///
/// # Safety
/// `result` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_study_result_rmse(
    result: *const HsStudyResult,
    cell: usize,
    param: usize,
    out: *mut f64,
) -> HsStatus {
    guard(|| {
        let r = &ref_arg(result, "result")?.0;
        let c = r.cells.get(cell).ok_or_else(|| invalid("cell out of range"))?;
        if param >= r.truth.len() {
            return Err(invalid("parameter out of range"));
        }
        fill(out, 1, &[c.rmse(param, &r.truth)])
    })
}

/// Fitted log-log RMSE slope of parameter `param` (needs >= 3 cells).
///
/// # Safety
/// `result` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hs_study_result_slope(result: *const HsStudyResult, param: usize, out: *mut f64) -> HsStatus {
    guard(|| {
        let r = &ref_arg(result, "result")?.0;
        let fits = r.slopes()?;
        let f = fits.get(param).ok_or_else(|| invalid("parameter out of range"))?;
        fill(out, 1, &[f.slope])
    })
}

/// Writes the CSV, summary and SVG files into `dir`.
///
/// # Safety
/// `result` must be live; `dir` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hs_study_result_emit(result: *const HsStudyResult, dir: *const c_char) -> HsStatus {
    guard(|| {
        let r = &ref_arg(result, "result")?.0;
        emit_report(r, Path::new(str_arg(dir, "dir")?))?;
        Ok(())
    })
}
