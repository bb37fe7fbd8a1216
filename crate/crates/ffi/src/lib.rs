//! C interface to the solver and the reconstruction drivers.
//!
//! Every fallible function returns a [`HinvStatus`]. On failure a message
//! is kept per thread and read with [`hinv_last_error`]. Handles are opaque
//! and owned by the caller until passed to the matching `_free` function.
//! Array arguments are `(pointer, length)` pairs, and a length that differs
//! from the documented one is rejected with `HINV_STATUS_INVALID_ARGUMENT`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use hybrid_inversion::harness::{Experiment, HarnessError, RunConfig};
use hybrid_inversion::inversion::{run_acga, run_cga, AcgaInputs, AcgaStop, InversionError, InversionProblem};
use hybrid_inversion::wavesolver::solve_forward;
use hybrid_inversion::{BoundaryTrace, CoefficientField, SolverError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HinvStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// Wrong array length, non-UTF-8 text or an out-of-range value.
    InvalidArgument = 2,
    /// The configuration or the input data were rejected.
    Config = 3,
    /// A solve failed: CFL violation, divergence or non-finite values.
    Numerical = 4,
    /// An internal panic was caught at the boundary.
    Panic = 5,
}

/// Parsed experiment: mesh, phantom coefficients, pulse, time grid, initial
/// iterate and objective settings.
pub struct HinvExperiment {
    exp: Experiment,
}

/// Boundary trace with values ordered `[time][node][component]`.
pub struct HinvTrace {
    trace: BoundaryTrace,
}

/// Final coefficients of a reconstruction on its last mesh.
pub struct HinvReconstruction {
    dim: usize,
    coords: Vec<f64>,
    coeffs: CoefficientField,
    j_history: Vec<f64>,
    iterations: usize,
    levels: usize,
    stop: CString,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HinvExperimentInfo {
    pub dim: usize,
    pub fem_nodes: usize,
    pub boundary_nodes: usize,
    /// Number of time steps; traces hold `time_steps + 1` levels.
    pub time_steps: usize,
    pub dt: f64,
    pub h: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HinvTraceInfo {
    pub dim: usize,
    pub nodes: usize,
    pub times: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HinvReconstructionInfo {
    pub dim: usize,
    pub fem_nodes: usize,
    /// Conjugate-gradient iterations summed over all levels.
    pub iterations: usize,
    pub levels: usize,
    pub final_j: f64,
    pub max_eps: f64,
}

struct Fail(HinvStatus, String);

impl From<HarnessError> for Fail {
    fn from(e: HarnessError) -> Self {
        let status = if e.exit_code() == 2 { HinvStatus::Config } else { HinvStatus::Numerical };
        Fail(status, e.to_string())
    }
}

impl From<InversionError> for Fail {
    fn from(e: InversionError) -> Self {
        HarnessError::from(e).into()
    }
}

impl From<SolverError> for Fail {
    fn from(e: SolverError) -> Self {
        HarnessError::from(e).into()
    }
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(HinvStatus::InvalidArgument, msg.into())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> HinvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HinvStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            HinvStatus::Panic
        }
    }
}

fn nonnull<T>(p: *const T, name: &str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail(HinvStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    nonnull(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{name} is not UTF-8")))
}

/// # Safety
/// `p` is null or valid for `len` reads.
unsafe fn input<'a>(p: *const f64, len: usize, expect: usize, name: &str) -> Result<&'a [f64], Fail> {
    nonnull(p, name)?;
    if len != expect {
        return Err(invalid(format!("{name} has length {len}, expected {expect}")));
    }
    Ok(slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` is null or valid for `len` writes.
unsafe fn output<'a>(p: *mut f64, len: usize, expect: usize, name: &str) -> Result<&'a mut [f64], Fail> {
    nonnull(p, name)?;
    if len != expect {
        return Err(invalid(format!("{name} has length {len}, expected {expect}")));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

fn boxed<T>(out: *mut *mut T, v: T) {
    // SAFETY: callers check `out` for null before building `v`.
    unsafe { *out = Box::into_raw(Box::new(v)) };
}

fn coefficients(exp: &Experiment, eps: &[f64], sigma: &[f64]) -> Result<CoefficientField, Fail> {
    let b = &exp.config.bounds;
    let c = CoefficientField::new(eps.to_vec(), sigma.to_vec(), b.eps_max, b.sigma_max).map_err(|e| invalid(e.to_string()))?;
    if !c.within_bounds() {
        return Err(invalid(format!("coefficients outside eps in [1, {}], sigma in [0, {}]", b.eps_max, b.sigma_max)));
    }
    Ok(c)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hinv_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null after a
/// successful one. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn hinv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds an experiment from TOML text. Relative paths inside resolve
/// against `base_dir`, or the working directory when it is null.
///
/// # Safety
/// `toml` and a non-null `base_dir` are NUL-terminated strings; `out` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hinv_experiment_from_toml(
    toml: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut HinvExperiment,
) -> HinvStatus {
    guard(|| {
        nonnull(out, "out")?;
        let mut cfg = RunConfig::from_toml_str(text(toml, "toml")?)?;
        if !base_dir.is_null() {
            cfg.resolve_paths(Path::new(text(base_dir, "base_dir")?));
        }
        boxed(out, HinvExperiment { exp: Experiment::build(&cfg)? });
        Ok(())
    })
}

/// Builds an experiment from a TOML file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hinv_experiment_load(path: *const c_char, out: *mut *mut HinvExperiment) -> HinvStatus {
    guard(|| {
        nonnull(out, "out")?;
        let cfg = RunConfig::load(Path::new(text(path, "path")?))?;
        boxed(out, HinvExperiment { exp: Experiment::build(&cfg)? });
        Ok(())
    })
}

/// # Safety
/// `exp` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hinv_experiment_free(exp: *mut HinvExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// # Safety
/// `exp` is a live handle; `info` is writable.
#[no_mangle]
pub unsafe extern "C" fn hinv_experiment_info(exp: *const HinvExperiment, info: *mut HinvExperimentInfo) -> HinvStatus {
    guard(|| {
        nonnull(exp, "exp")?;
        nonnull(info, "info")?;
        let e = &(*exp).exp;
        *info = HinvExperimentInfo {
            dim: e.mesh.dim(),
            fem_nodes: e.mesh.fem_mesh().node_count(),
            boundary_nodes: e.mesh.outer_boundary_nodes().len(),
            time_steps: e.tg.steps,
            dt: e.tg.dt,
            h: e.mesh.h_fdm(),
        };
        Ok(())
    })
}

/// FE node coordinates, `dim * fem_nodes` values ordered by node.
///
/// # Safety
/// `exp` is a live handle; `coords` is valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hinv_experiment_fem_coords(exp: *const HinvExperiment, coords: *mut f64, len: usize) -> HinvStatus {
    guard(|| {
        nonnull(exp, "exp")?;
        let m = &(*exp).exp.mesh;
        let d = m.dim();
        let out = output(coords, len, d * m.fem_mesh().node_count(), "coords")?;
        for (i, p) in m.fem_mesh().nodes().iter().enumerate() {
            out[i * d..(i + 1) * d].copy_from_slice(&p[..d]);
        }
        Ok(())
    })
}

/// Phantom coefficients at the FE nodes (`which = 0`) or the initial
/// iterate (`which = 1`), `fem_nodes` values each.
///
/// # Safety
/// `exp` is a live handle; `eps` and `sigma` are valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hinv_experiment_coefficients(
    exp: *const HinvExperiment,
    which: u32,
    eps: *mut f64,
    sigma: *mut f64,
    len: usize,
) -> HinvStatus {
    guard(|| {
        nonnull(exp, "exp")?;
        let e = &(*exp).exp;
        let c = match which {
            0 => &e.truth,
            1 => &e.init,
            _ => return Err(invalid(format!("which = {which}, expected 0 or 1"))),
        };
        output(eps, len, c.len(), "eps")?.copy_from_slice(&c.eps);
        output(sigma, len, c.len(), "sigma")?.copy_from_slice(&c.sigma);
        Ok(())
    })
}

/// Forward solve. Null `eps` and `sigma` select the phantom coefficients;
/// otherwise both hold `len = fem_nodes` values.
///
/// # Safety
/// `exp` is a live handle; non-null `eps` and `sigma` are valid for `len`
/// reads; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hinv_forward(
    exp: *const HinvExperiment,
    eps: *const f64,
    sigma: *const f64,
    len: usize,
    out: *mut *mut HinvTrace,
) -> HinvStatus {
    guard(|| {
        nonnull(exp, "exp")?;
        nonnull(out, "out")?;
        let e = &(*exp).exp;
        let n = e.mesh.fem_mesh().node_count();
        let owned;
        let c = if eps.is_null() && sigma.is_null() {
            &e.truth
        } else {
            owned = coefficients(e, input(eps, len, n, "eps")?, input(sigma, len, n, "sigma")?)?;
            &owned
        };
        let (_, trace) = solve_forward(&e.mesh, c, &e.pulse, &e.tg)?;
        boxed(out, HinvTrace { trace });
        Ok(())
    })
}

/// Synthetic observations of the phantom with the configured noise level.
///
/// # Safety
/// `exp` is a live handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hinv_make_observations(exp: *const HinvExperiment, seed: u64, out: *mut *mut HinvTrace) -> HinvStatus {
    guard(|| {
        nonnull(exp, "exp")?;
        nonnull(out, "out")?;
        let trace = (*exp).exp.synthetic_observations(seed)?;
        boxed(out, HinvTrace { trace });
        Ok(())
    })
}

/// Wraps external data as a trace on the boundary and time grid of `exp`.
/// `values` holds `dim * boundary_nodes * (time_steps + 1)` entries.
///
/// # Safety
/// `exp` is a live handle; `values` is valid for `len` reads; `out` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hinv_trace_from_values(
    exp: *const HinvExperiment,
    values: *const f64,
    len: usize,
    out: *mut *mut HinvTrace,
) -> HinvStatus {
    guard(|| {
        nonnull(exp, "exp")?;
        nonnull(out, "out")?;
        let e = &(*exp).exp;
        let nodes = e.mesh.outer_boundary_nodes().to_vec();
        let grid = e.mesh.fdm_grid();
        let coords = nodes.iter().map(|&g| grid.coord(g)).collect();
        let mut trace = BoundaryTrace::zeros(e.mesh.dim(), nodes, coords, e.tg.times());
        let n = trace.values().len();
        let v = input(values, len, n, "values")?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(invalid("values contain non-finite entries"));
        }
        trace.values_mut().copy_from_slice(v);
        boxed(out, HinvTrace { trace });
        Ok(())
    })
}

/// # Safety
/// `trace` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hinv_trace_free(trace: *mut HinvTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// `trace` is a live handle; `info` is writable.
#[no_mangle]
pub unsafe extern "C" fn hinv_trace_info(trace: *const HinvTrace, info: *mut HinvTraceInfo) -> HinvStatus {
    guard(|| {
        nonnull(trace, "trace")?;
        nonnull(info, "info")?;
        let t = &(*trace).trace;
        *info = HinvTraceInfo { dim: t.dim(), nodes: t.nodes().len(), times: t.times().len() };
        Ok(())
    })
}

/// Copies all `dim * nodes * times` values out.
///
/// # Safety
/// `trace` is a live handle; `values` is valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hinv_trace_values(trace: *const HinvTrace, values: *mut f64, len: usize) -> HinvStatus {
    guard(|| {
        nonnull(trace, "trace")?;
        let t = &(*trace).trace;
        output(values, len, t.values().len(), "values")?.copy_from_slice(t.values());
        Ok(())
    })
}

/// Objective value and gradients at the given coefficients against `obs`.
/// `g_eps` and `g_sigma` may be null when only `J` is wanted.
///
/// # Safety
/// `exp` and `obs` are live handles; `eps` and `sigma` are valid for `len`
/// reads; `j` is writable; non-null gradient buffers are valid for `len`
/// writes.
#[no_mangle]
pub unsafe extern "C" fn hinv_evaluate(
    exp: *const HinvExperiment,
    obs: *const HinvTrace,
    eps: *const f64,
    sigma: *const f64,
    len: usize,
    j: *mut f64,
    g_eps: *mut f64,
    g_sigma: *mut f64,
) -> HinvStatus {
    guard(|| {
        nonnull(exp, "exp")?;
        nonnull(obs, "obs")?;
        nonnull(j, "j")?;
        let e = &(*exp).exp;
        let n = e.mesh.fem_mesh().node_count();
        let c = coefficients(e, input(eps, len, n, "eps")?, input(sigma, len, n, "sigma")?)?;
        let problem = InversionProblem {
            mesh: &e.mesh,
            pulse: &e.pulse,
            tg: e.tg,
            obs: &(*obs).trace,
            objective: &e.objective,
            freeze_sigma: e.config.cga.freeze_sigma,
        };
        if g_eps.is_null() && g_sigma.is_null() {
            *j = problem.objective_at(&c)?.j;
            return Ok(());
        }
        let ev = problem.evaluate(&c)?;
        if !g_eps.is_null() {
            output(g_eps, len, n, "g_eps")?.copy_from_slice(&ev.gradients.g_eps);
        }
        if !g_sigma.is_null() {
            output(g_sigma, len, n, "g_sigma")?.copy_from_slice(&ev.gradients.g_sigma);
        }
        *j = ev.objective.j;
        Ok(())
    })
}

/// Reconstruction from `obs` starting at the configured initial iterate:
/// conjugate gradients on the experiment mesh, or the adaptive driver when
/// `adaptive` is set (needs an `[acga]` section).
///
/// # Safety
/// `exp` and `obs` are live handles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn hinv_invert(
    exp: *const HinvExperiment,
    obs: *const HinvTrace,
    adaptive: bool,
    out: *mut *mut HinvReconstruction,
) -> HinvStatus {
    guard(|| {
        nonnull(exp, "exp")?;
        nonnull(obs, "obs")?;
        nonnull(out, "out")?;
        let e = &(*exp).exp;
        let obs = &(*obs).trace;
        let cfg = &e.config;
        let d = e.mesh.dim();
        let flat = |m: &hybrid_inversion::HybridMesh| m.fem_mesh().nodes().iter().flat_map(|p| p[..d].to_vec()).collect::<Vec<f64>>();
        let rec = if adaptive {
            let acga = cfg.acga.ok_or_else(|| Fail(HinvStatus::Config, "adaptive inversion needs an [acga] section".into()))?;
            let inputs = AcgaInputs {
                mesh: &e.mesh,
                obs,
                pulse: &e.pulse,
                t_end: cfg.time.t_end,
                cfl_safety: cfg.time.cfl_safety,
                objective: &e.objective,
                init: &e.init,
            };
            let res = run_acga(&acga, &cfg.cga, &inputs)?;
            let last = res.last();
            HinvReconstruction {
                dim: d,
                coords: flat(&last.mesh),
                coeffs: last.state.coeffs.clone(),
                j_history: last.state.j_history.clone(),
                iterations: res.levels.iter().map(|l| l.state.m).sum(),
                levels: res.levels.len(),
                stop: CString::new(match &res.stop {
                    AcgaStop::Tolerance => "tolerance".to_string(),
                    AcgaStop::MaxRefinements => "max_refinements".to_string(),
                    AcgaStop::RefinementFailed(m) => format!("refinement_failed: {m}"),
                })
                .unwrap_or_default(),
            }
        } else {
            let problem = InversionProblem {
                mesh: &e.mesh,
                pulse: &e.pulse,
                tg: e.tg,
                obs,
                objective: &e.objective,
                freeze_sigma: cfg.cga.freeze_sigma,
            };
            let state = run_cga(&problem, e.init.clone(), &cfg.cga)?;
            HinvReconstruction {
                dim: d,
                coords: flat(&e.mesh),
                iterations: state.m,
                levels: 1,
                stop: CString::new(state.stop_reason.to_string()).unwrap_or_default(),
                j_history: state.j_history,
                coeffs: state.coeffs,
            }
        };
        boxed(out, rec);
        Ok(())
    })
}

/// # Safety
/// `rec` is null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hinv_reconstruction_free(rec: *mut HinvReconstruction) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}

/// # Safety
/// `rec` is a live handle; `info` is writable.
#[no_mangle]
pub unsafe extern "C" fn hinv_reconstruction_info(rec: *const HinvReconstruction, info: *mut HinvReconstructionInfo) -> HinvStatus {
    guard(|| {
        nonnull(rec, "rec")?;
        nonnull(info, "info")?;
        let r = &*rec;
        *info = HinvReconstructionInfo {
            dim: r.dim,
            fem_nodes: r.coeffs.len(),
            iterations: r.iterations,
            levels: r.levels,
            final_j: r.j_history.last().copied().unwrap_or(f64::NAN),
            max_eps: r.coeffs.max_eps(),
        };
        Ok(())
    })
}

/// Final `eps` and `sigma`, `fem_nodes` values each, on the last mesh.
///
/// # Safety
/// `rec` is a live handle; `eps` and `sigma` are valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hinv_reconstruction_fields(
    rec: *const HinvReconstruction,
    eps: *mut f64,
    sigma: *mut f64,
    len: usize,
) -> HinvStatus {
    guard(|| {
        nonnull(rec, "rec")?;
        let c = &(*rec).coeffs;
        output(eps, len, c.len(), "eps")?.copy_from_slice(&c.eps);
        output(sigma, len, c.len(), "sigma")?.copy_from_slice(&c.sigma);
        Ok(())
    })
}

/// Node coordinates of the last mesh, `dim * fem_nodes` values.
///
/// # Safety
/// `rec` is a live handle; `coords` is valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn hinv_reconstruction_coords(rec: *const HinvReconstruction, coords: *mut f64, len: usize) -> HinvStatus {
    guard(|| {
        nonnull(rec, "rec")?;
        let r = &*rec;
        output(coords, len, r.coords.len(), "coords")?.copy_from_slice(&r.coords);
        Ok(())
    })
}

/// `J` at every iterate of the last level, `iterations_on_last_level + 1`
/// values; `len` may exceed that and `written` receives the count.
///
/// # Safety
/// `rec` is a live handle; `j` is valid for `len` writes; `written` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn hinv_reconstruction_j_history(
    rec: *const HinvReconstruction,
    j: *mut f64,
    len: usize,
    written: *mut usize,
) -> HinvStatus {
    guard(|| {
        nonnull(rec, "rec")?;
        nonnull(j, "j")?;
        nonnull(written, "written")?;
        let h = &(*rec).j_history;
        if len < h.len() {
            return Err(invalid(format!("j has length {len}, need at least {}", h.len())));
        }
        slice::from_raw_parts_mut(j, h.len()).copy_from_slice(h);
        *written = h.len();
        Ok(())
    })
}

/// Why the (last level of the) reconstruction stopped, as a NUL-terminated
/// string owned by `rec`; null for a null handle.
///
/// # Safety
/// `rec` is null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hinv_reconstruction_stop_reason(rec: *const HinvReconstruction) -> *const c_char {
    if rec.is_null() {
        return ptr::null();
    }
    (*rec).stop.as_ptr()
}
