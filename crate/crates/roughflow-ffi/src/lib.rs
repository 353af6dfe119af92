//! C ABI over the roughflow laboratory.
//!
//! Conventions: every fallible call returns an [`RfStatus`]; on failure a
//! message is stored in thread-local storage and can be read with
//! [`rf_last_error_message`] until the next failing call on the same thread.
//! Handles created by `*_new` functions are owned by the caller and must be
//! released with the matching `*_free`; passing null to a free is a no-op.
//! Output buffers are written only when the call returns `RF_STATUS_OK`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use roughflow::config::ExperimentConfig;
use roughflow::drivers::{lift_fbm, FbmSampler};
use roughflow::experiment::run_experiment;
use roughflow::grid::TimeGrid;
use roughflow::rough::{max_chen_defect, max_symmetry_defect, RoughPath};
use roughflow::Error;

/// Result of every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfStatus {
    /// Success.
    Ok = 0,
    /// A parameter or configuration was rejected.
    InvalidArgument = 1,
    /// The computation failed numerically (e.g. a factorization broke down).
    Numerical = 2,
    /// Reading or writing files failed.
    Io = 3,
    /// A required pointer was null.
    NullPointer = 4,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 5,
    /// The library caught a panic; the handle state is unchanged.
    Panic = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes stripped");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> RfStatus {
    match err {
        Error::Invalid(_) | Error::Config(_) => RfStatus::InvalidArgument,
        Error::Numerical(_) => RfStatus::Numerical,
        Error::Io(_) => RfStatus::Io,
    }
}

fn fail(err: Error) -> RfStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Runs `body` with panics converted to `RF_STATUS_PANIC`.
fn guarded(body: impl FnOnce() -> RfStatus) -> RfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic with non-string payload".into());
            set_error(msg);
            RfStatus::Panic
        }
    }
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated C string.
unsafe fn read_cstr<'a>(ptr: *const c_char) -> Result<&'a str, RfStatus> {
    if ptr.is_null() {
        set_error("null string argument".into());
        return Err(RfStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8".into());
        RfStatus::InvalidUtf8
    })
}

/// Library version as a static NUL-terminated string; never freed.
#[no_mangle]
pub extern "C" fn rf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message describing the most recent failure on this thread, or null if no
/// call has failed yet. The pointer stays valid until the next failing call
/// on the same thread.
#[no_mangle]
pub extern "C" fn rf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Fractional Brownian sampler with a cached covariance factorization.
pub struct RfFbmSampler {
    inner: FbmSampler,
    nodes: usize,
    dim: usize,
}

/// Creates a sampler for `dim` independent fBm components on a uniform grid
/// of `nodes` points over [0, horizon]. O(nodes^3) once; each draw is
/// O(nodes^2).
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn rf_fbm_sampler_new(
    hurst: f64,
    dim: usize,
    nodes: usize,
    horizon: f64,
    out: *mut *mut RfFbmSampler,
) -> RfStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output handle".into());
            return RfStatus::NullPointer;
        }
        let grid = match TimeGrid::new(0.0, horizon, nodes) {
            Ok(g) => g,
            Err(e) => return fail(e),
        };
        match FbmSampler::new(hurst, dim, &grid) {
            Ok(inner) => {
                let handle = Box::new(RfFbmSampler { inner, nodes, dim });
                *out = Box::into_raw(handle);
                RfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of doubles one sample occupies: nodes x dim, node-major.
///
/// # Safety
/// `sampler` must be a live handle from `rf_fbm_sampler_new` or null.
#[no_mangle]
pub unsafe extern "C" fn rf_fbm_sampler_values_len(sampler: *const RfFbmSampler) -> usize {
    if sampler.is_null() {
        return 0;
    }
    (*sampler).nodes * (*sampler).dim
}

/// Draws the path for `seed` into `out_values` (length `len`, which must
/// equal `rf_fbm_sampler_values_len`). Identical seeds give identical bytes.
///
/// # Safety
/// `sampler` must be a live handle; `out_values` must point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_fbm_sampler_sample(
    sampler: *const RfFbmSampler,
    seed: u64,
    out_values: *mut f64,
    len: usize,
) -> RfStatus {
    guarded(|| {
        if sampler.is_null() || out_values.is_null() {
            set_error("null sampler or output buffer".into());
            return RfStatus::NullPointer;
        }
        let want = (*sampler).nodes * (*sampler).dim;
        if len != want {
            set_error(format!("output buffer holds {len} doubles, need {want}"));
            return RfStatus::InvalidArgument;
        }
        let path = (*sampler).inner.sample(seed);
        let src = path.values();
        std::ptr::copy_nonoverlapping(src.as_ptr(), out_values, want);
        RfStatus::Ok
    })
}

/// Releases a sampler. Null is ignored.
///
/// # Safety
/// `sampler` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn rf_fbm_sampler_free(sampler: *mut RfFbmSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// A driving path enhanced with its second-order iterated integrals.
pub struct RfRoughPath {
    inner: RoughPath,
}

/// Samples fBm with the given seed on `nodes` points over [0, horizon] and
/// lifts it. Requires `gamma < hurst`.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn rf_rough_path_from_fbm(
    hurst: f64,
    dim: usize,
    nodes: usize,
    horizon: f64,
    seed: u64,
    gamma: f64,
    out: *mut *mut RfRoughPath,
) -> RfStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output handle".into());
            return RfStatus::NullPointer;
        }
        let build = || -> roughflow::Result<RoughPath> {
            let grid = TimeGrid::new(0.0, horizon, nodes)?;
            let path = FbmSampler::new(hurst, dim, &grid)?.sample(seed);
            lift_fbm(&path, hurst, gamma)
        };
        match build() {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RfRoughPath { inner }));
                RfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of grid nodes, or 0 for null.
///
/// # Safety
/// `path` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rf_rough_path_len(path: *const RfRoughPath) -> usize {
    if path.is_null() {
        0
    } else {
        (*path).inner.len()
    }
}

/// Driver dimension, or 0 for null.
///
/// # Safety
/// `path` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn rf_rough_path_dim(path: *const RfRoughPath) -> usize {
    if path.is_null() {
        0
    } else {
        (*path).inner.dim()
    }
}

unsafe fn rough_path_block(
    path: *const RfRoughPath,
    i: usize,
    j: usize,
    out: *mut f64,
    len: usize,
    area: bool,
) -> RfStatus {
    if path.is_null() || out.is_null() {
        set_error("null path or output buffer".into());
        return RfStatus::NullPointer;
    }
    let rp = &(*path).inner;
    if !(i <= j && j < rp.len()) {
        set_error(format!(
            "node pair ({i}, {j}) out of range for {} nodes",
            rp.len()
        ));
        return RfStatus::InvalidArgument;
    }
    let d = rp.dim();
    let want = if area { d * d } else { d };
    if len != want {
        set_error(format!("output buffer holds {len} doubles, need {want}"));
        return RfStatus::InvalidArgument;
    }
    let values = if area {
        rp.area(i, j)
    } else {
        rp.increment(i, j)
    };
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, want);
    RfStatus::Ok
}

/// Path increment between nodes `i <= j` into `out` (`len` = dim).
///
/// # Safety
/// `path` must be a live handle; `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_rough_path_increment(
    path: *const RfRoughPath,
    i: usize,
    j: usize,
    out: *mut f64,
    len: usize,
) -> RfStatus {
    guarded(|| rough_path_block(path, i, j, out, len, false))
}

/// Second-order block between nodes `i <= j` into `out` (`len` = dim^2,
/// row-major).
///
/// # Safety
/// `path` must be a live handle; `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_rough_path_area(
    path: *const RfRoughPath,
    i: usize,
    j: usize,
    out: *mut f64,
    len: usize,
) -> RfStatus {
    guarded(|| rough_path_block(path, i, j, out, len, true))
}

/// Worst additivity defect of the second-order blocks over grid triples.
///
/// # Safety
/// `path` must be a live handle; `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn rf_rough_path_max_chen_defect(
    path: *const RfRoughPath,
    out: *mut f64,
) -> RfStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            set_error("null path or output".into());
            return RfStatus::NullPointer;
        }
        *out = max_chen_defect(&(*path).inner);
        RfStatus::Ok
    })
}

/// Worst deviation of the symmetric part from half the squared increment.
///
/// # Safety
/// `path` must be a live handle; `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn rf_rough_path_max_symmetry_defect(
    path: *const RfRoughPath,
    out: *mut f64,
) -> RfStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            set_error("null path or output".into());
            return RfStatus::NullPointer;
        }
        *out = max_symmetry_defect(&(*path).inner);
        RfStatus::Ok
    })
}

/// Releases a rough path. Null is ignored.
///
/// # Safety
/// `path` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn rf_rough_path_free(path: *mut RfRoughPath) {
    if !path.is_null() {
        drop(Box::from_raw(path));
    }
}

/// Parses and validates an experiment configuration (JSON) without running
/// it.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated C string.
#[no_mangle]
pub unsafe extern "C" fn rf_config_validate(config_json: *const c_char) -> RfStatus {
    guarded(|| {
        let text = match read_cstr(config_json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let parsed = ExperimentConfig::from_json(text).and_then(|c| c.validate().map(|_| c));
        match parsed {
            Ok(_) => RfStatus::Ok,
            Err(e) => fail(e),
        }
    })
}

/// Runs an experiment configuration (JSON), writing artifacts under
/// `out_dir` exactly like the command line `run` subcommand. When
/// `out_report_json` is non-null it receives the report as a heap-allocated
/// JSON string to be released with `rf_string_free`.
///
/// # Safety
/// `config_json` and `out_dir` must be valid NUL-terminated C strings;
/// `out_report_json` must be null or point to writable pointer storage.
#[no_mangle]
pub unsafe extern "C" fn rf_experiment_run(
    config_json: *const c_char,
    out_dir: *const c_char,
    out_report_json: *mut *mut c_char,
) -> RfStatus {
    guarded(|| {
        let text = match read_cstr(config_json) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let dir = match read_cstr(out_dir) {
            Ok(t) => t,
            Err(status) => return status,
        };
        let config = match ExperimentConfig::from_json(text) {
            Ok(c) => c,
            Err(e) => return fail(e),
        };
        let run = || -> roughflow::Result<String> {
            let report = run_experiment(&config, text.as_bytes(), Path::new(dir))?;
            let json = report.to_json();
            std::fs::write(Path::new(dir).join("report.json"), &json)?;
            Ok(json)
        };
        match run() {
            Ok(json) => {
                if !out_report_json.is_null() {
                    let c = CString::new(json.replace('\0', " ")).expect("nul bytes stripped");
                    *out_report_json = c.into_raw();
                }
                RfStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string returned by `rf_experiment_run`, not freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn rf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use roughflow::drivers::{sample_fbm, FbmSpec};

    fn last_error() -> String {
        let ptr = rf_last_error_message();
        assert!(!ptr.is_null());
        unsafe { CStr::from_ptr(ptr) }.to_str().unwrap().to_owned()
    }

    #[test]
    fn sampler_handle_matches_the_library() {
        let mut handle: *mut RfFbmSampler = std::ptr::null_mut();
        let status = unsafe { rf_fbm_sampler_new(0.4, 2, 65, 1.0, &mut handle) };
        assert_eq!(status, RfStatus::Ok);
        let len = unsafe { rf_fbm_sampler_values_len(handle) };
        assert_eq!(len, 130);
        let mut buf = vec![0.0; len];
        let status = unsafe { rf_fbm_sampler_sample(handle, 99, buf.as_mut_ptr(), len) };
        assert_eq!(status, RfStatus::Ok);
        let spec = FbmSpec::new(0.4, 2, 1.0, 99).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 65).unwrap();
        let want = sample_fbm(&spec, &grid).unwrap();
        assert_eq!(buf, want.values());
        unsafe { rf_fbm_sampler_free(handle) };
    }

    #[test]
    fn invalid_parameters_set_messages() {
        let mut handle: *mut RfFbmSampler = std::ptr::null_mut();
        let status = unsafe { rf_fbm_sampler_new(1.5, 1, 65, 1.0, &mut handle) };
        assert_eq!(status, RfStatus::InvalidArgument);
        assert!(last_error().contains("hurst must lie in (0,1)"));
        assert!(handle.is_null());

        let status = unsafe { rf_fbm_sampler_new(0.5, 1, 65, 1.0, std::ptr::null_mut()) };
        assert_eq!(status, RfStatus::NullPointer);

        let mut rp: *mut RfRoughPath = std::ptr::null_mut();
        let status = unsafe { rf_rough_path_from_fbm(0.3, 1, 33, 1.0, 1, 0.4, &mut rp) };
        assert_eq!(status, RfStatus::InvalidArgument);
        assert!(last_error().contains("must be < the Hurst index"));
    }

    #[test]
    fn rough_path_accessors_round_trip() {
        let mut rp: *mut RfRoughPath = std::ptr::null_mut();
        let status = unsafe { rf_rough_path_from_fbm(0.45, 2, 129, 1.0, 5, 0.4, &mut rp) };
        assert_eq!(status, RfStatus::Ok);
        assert_eq!(unsafe { rf_rough_path_len(rp) }, 129);
        assert_eq!(unsafe { rf_rough_path_dim(rp) }, 2);

        let mut defect = f64::NAN;
        let status = unsafe { rf_rough_path_max_chen_defect(rp, &mut defect) };
        assert_eq!(status, RfStatus::Ok);
        assert!(defect <= 1e-12);
        let status = unsafe { rf_rough_path_max_symmetry_defect(rp, &mut defect) };
        assert_eq!(status, RfStatus::Ok);
        assert!(defect <= 1e-12);

        let mut inc = vec![0.0; 2];
        let mut block = vec![0.0; 4];
        let ok = unsafe { rf_rough_path_increment(rp, 10, 50, inc.as_mut_ptr(), 2) };
        assert_eq!(ok, RfStatus::Ok);
        let ok = unsafe { rf_rough_path_area(rp, 10, 50, block.as_mut_ptr(), 4) };
        assert_eq!(ok, RfStatus::Ok);
        // Geometric lift: the symmetric part is half the increment square.
        assert!((block[1] + block[2] - inc[0] * inc[1]).abs() <= 1e-12);

        let bad = unsafe { rf_rough_path_increment(rp, 50, 10, inc.as_mut_ptr(), 2) };
        assert_eq!(bad, RfStatus::InvalidArgument);
        let bad = unsafe { rf_rough_path_area(rp, 10, 50, block.as_mut_ptr(), 3) };
        assert_eq!(bad, RfStatus::InvalidArgument);
        assert!(last_error().contains("need 4"));

        unsafe { rf_rough_path_free(rp) };
        unsafe { rf_rough_path_free(std::ptr::null_mut()) };
    }

    #[test]
    fn config_validation_through_the_abi() {
        let good = CString::new(
            r#"{"kind": "fbm", "hurst": 0.5, "nodes": 65, "horizon": 1.0, "seed": 1}"#,
        )
        .unwrap();
        assert_eq!(unsafe { rf_config_validate(good.as_ptr()) }, RfStatus::Ok);

        let typo = CString::new(r#"{"kind": "fbm", "hurst": 0.5, "nodes": 65, "bogus": 1}"#)
            .unwrap();
        assert_eq!(
            unsafe { rf_config_validate(typo.as_ptr()) },
            RfStatus::InvalidArgument
        );
        assert_eq!(
            unsafe { rf_config_validate(std::ptr::null()) },
            RfStatus::NullPointer
        );
    }

    #[test]
    fn experiment_runs_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let config = CString::new(
            r#"{"kind": "fbm", "hurst": 0.5, "nodes": 65, "horizon": 1.0, "seed": 12}"#,
        )
        .unwrap();
        let out_dir = CString::new(dir.path().to_str().unwrap()).unwrap();
        let mut report: *mut c_char = std::ptr::null_mut();
        let status = unsafe { rf_experiment_run(config.as_ptr(), out_dir.as_ptr(), &mut report) };
        assert_eq!(status, RfStatus::Ok);
        assert!(!report.is_null());
        let text = unsafe { CStr::from_ptr(report) }.to_str().unwrap();
        let parsed: serde_json::Value = serde_json::from_str(text).unwrap();
        assert_eq!(parsed["kind"], "fbm");
        assert_eq!(parsed["config_hash"].as_str().unwrap().len(), 64);
        unsafe { rf_string_free(report) };
        assert!(dir.path().join("path.csv").exists());
        assert!(dir.path().join("report.json").exists());
    }

    #[test]
    fn version_is_a_static_string() {
        let v = unsafe { CStr::from_ptr(rf_version()) }.to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}
