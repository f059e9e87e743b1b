//! C interface to the `asyncpd` solvers and simulator.
//!
//! Every function returns an [`ApdStatus`]. On failure a description is kept
//! per thread and can be read with [`apd_last_error`]. Handles are opaque and
//! must be released with their `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use asyncpd::experiments::{build_flow_problem, run_flow_experiment, FlowReferences, FlowRoutingConfig};
use asyncpd::problem::ProblemSpec;
use asyncpd::reg::RegParams;
use asyncpd::sim::{RoundRecord, RunTrace};
use asyncpd::sync::{SaddleProblem, DEFAULT_MAX_ITERS};
use asyncpd::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    NotConverged = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Opaque problem handle.
pub struct ApdProblem {
    spec: ProblemSpec,
}

/// Opaque per-round trace handle.
pub struct ApdTrace {
    trace: RunTrace,
}

/// Summary of one benchmark run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ApdFlowResult {
    pub rounds: u64,
    pub ticks: u64,
    pub converged: bool,
    pub gamma: f64,
    pub rho: f64,
    pub primal_err_reg: f64,
    pub primal_err_unreg: f64,
    pub dual_err_reg: f64,
    pub dual_err_unreg: f64,
    pub max_g_final: f64,
    pub max_g_reg: f64,
}

/// One round of a trace; errors are NaN when no reference was available.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ApdRound {
    pub t: u64,
    pub k_t: u64,
    pub c_t: u64,
    pub fresh: u64,
    pub primal_err_reg: f64,
    pub primal_err_unreg: f64,
    pub dual_err_reg: f64,
    pub dual_err_unreg: f64,
    pub max_g: f64,
    pub dual_bound: f64,
    pub primal_bound: f64,
}

impl From<&RoundRecord> for ApdRound {
    fn from(r: &RoundRecord) -> Self {
        Self {
            t: r.t,
            k_t: r.k_t,
            c_t: r.c_t,
            fresh: r.fresh as u64,
            primal_err_reg: r.primal_err_reg,
            primal_err_unreg: r.primal_err_unreg,
            dual_err_reg: r.dual_err_reg,
            dual_err_unreg: r.dual_err_unreg,
            max_g: r.max_g,
            dual_bound: r.dual_bound,
            primal_bound: r.primal_bound,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> ApdStatus {
    match e {
        Error::Config { .. } => ApdStatus::Config,
        Error::NotConverged { .. } => ApdStatus::NotConverged,
        Error::Io(_) | Error::Csv(_) => ApdStatus::Io,
        _ => ApdStatus::InvalidArgument,
    }
}

fn fail(status: ApdStatus, msg: impl Into<String>) -> ApdStatus {
    set_error(msg.into());
    status
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), ApdStatus>) -> ApdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ApdStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(ApdStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

fn check(r: asyncpd::Result<()>) -> Result<(), ApdStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn lift<T>(r: asyncpd::Result<T>) -> Result<T, ApdStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), ApdStatus> {
    if p.is_null() {
        Err(fail(ApdStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn path_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, ApdStatus> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|_| fail(ApdStatus::InvalidArgument, format!("`{name}` is not UTF-8")))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn apd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failure on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn apd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Flow-routing benchmark with default settings.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn apd_problem_flow_default(out: *mut *mut ApdProblem) -> ApdStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec = lift(build_flow_problem(&FlowRoutingConfig::default()))?;
        *out = Box::into_raw(Box::new(ApdProblem { spec }));
        Ok(())
    })
}

/// Problem loaded from a `key = value` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn apd_problem_from_config(path: *const c_char, out: *mut *mut ApdProblem) -> ApdStatus {
    guard(|| {
        non_null(out, "out")?;
        let path = path_arg(path, "path")?;
        let spec = lift(asyncpd::config::load_problem(Path::new(path)))?;
        *out = Box::into_raw(Box::new(ApdProblem { spec }));
        Ok(())
    })
}

/// # Safety
/// `p` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn apd_problem_free(p: *mut ApdProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of agents, primal dimension and number of constraints. Any output
/// pointer may be NULL.
///
/// # Safety
/// `p` must be a live handle; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn apd_problem_dims(
    p: *const ApdProblem,
    agents: *mut usize,
    dim: *mut usize,
    constraints: *mut usize,
) -> ApdStatus {
    guard(|| {
        non_null(p, "problem")?;
        let spec = &(*p).spec;
        if !agents.is_null() {
            *agents = spec.num_agents();
        }
        if !dim.is_null() {
            *dim = spec.dim();
        }
        if !constraints.is_null() {
            *constraints = spec.num_constraints();
        }
        Ok(())
    })
}

/// Regularized saddle point. `x` and `mu` must hold the primal dimension and
/// the number of constraints; `iterations` may be NULL.
///
/// # Safety
/// Buffers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn apd_solve_saddle(
    p: *const ApdProblem,
    alpha: f64,
    beta: f64,
    tol: f64,
    x: *mut f64,
    x_len: usize,
    mu: *mut f64,
    mu_len: usize,
    iterations: *mut u64,
) -> ApdStatus {
    guard(|| {
        non_null(p, "problem")?;
        let spec = &(*p).spec;
        if x_len < spec.dim() || mu_len < spec.num_constraints() {
            return Err(fail(
                ApdStatus::BufferTooSmall,
                format!("need x_len >= {} and mu_len >= {}", spec.dim(), spec.num_constraints()),
            ));
        }
        if spec.dim() > 0 {
            non_null(x, "x")?;
        }
        if spec.num_constraints() > 0 {
            non_null(mu, "mu")?;
        }
        let reg = lift(RegParams::new(alpha, beta))?;
        let problem = lift(SaddleProblem::new(spec.clone(), reg))?;
        let est = lift(problem.solve(tol, DEFAULT_MAX_ITERS))?;
        if !iterations.is_null() {
            *iterations = est.iterations;
        }
        if spec.dim() > 0 {
            std::slice::from_raw_parts_mut(x, spec.dim()).copy_from_slice(&est.x);
        }
        if spec.num_constraints() > 0 {
            std::slice::from_raw_parts_mut(mu, spec.num_constraints()).copy_from_slice(&est.mu);
        }
        if !est.converged {
            return Err(fail(
                ApdStatus::NotConverged,
                format!("residual {:e} after {} iterations", est.residual, est.iterations),
            ));
        }
        Ok(())
    })
}

/// Run the default benchmark for `(alpha, beta)` with the given seed and
/// horizon (0 keeps the default). `trace` may be NULL when the per-round
/// records are not needed. A run that hits the horizon still fills `result`
/// and returns `NotConverged`.
///
/// # Safety
/// `result` must be writable; `trace`, if non-NULL, must be writable.
#[no_mangle]
pub unsafe extern "C" fn apd_run_flow(
    alpha: f64,
    beta: f64,
    seed: u64,
    horizon: u64,
    record_every: u64,
    result: *mut ApdFlowResult,
    trace: *mut *mut ApdTrace,
) -> ApdStatus {
    guard(|| {
        non_null(result, "result")?;
        let mut cfg = FlowRoutingConfig { seed, ..FlowRoutingConfig::default() };
        if horizon > 0 {
            cfg.horizon = horizon;
        }
        let reg = lift(RegParams::new(alpha, beta))?;
        let spec = lift(build_flow_problem(&cfg))?;
        let refs = lift(FlowReferences::compute(&spec, &cfg, &[(alpha, beta)]))?;
        let r = lift(run_flow_experiment(&spec, &cfg, &refs, seed, reg, record_every.max(1)))?;
        *result = ApdFlowResult {
            rounds: r.rounds,
            ticks: r.ticks,
            converged: r.converged,
            gamma: r.gamma,
            rho: r.rho,
            primal_err_reg: r.primal_err_reg,
            primal_err_unreg: r.primal_err_unreg,
            dual_err_reg: r.dual_err_reg,
            dual_err_unreg: r.dual_err_unreg,
            max_g_final: r.max_g_final,
            max_g_reg: r.max_g_reg,
        };
        let converged = r.converged;
        if !trace.is_null() {
            *trace = Box::into_raw(Box::new(ApdTrace { trace: r.trace }));
        }
        if !converged {
            return Err(fail(ApdStatus::NotConverged, format!("horizon of {} rounds reached", cfg.horizon)));
        }
        Ok(())
    })
}

/// Number of stored round records.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn apd_trace_len(t: *const ApdTrace) -> usize {
    if t.is_null() {
        0
    } else {
        (*t).trace.rounds.len()
    }
}

/// # Safety
/// `t` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn apd_trace_round(t: *const ApdTrace, index: usize, out: *mut ApdRound) -> ApdStatus {
    guard(|| {
        non_null(t, "trace")?;
        non_null(out, "out")?;
        let rows = &(*t).trace.rounds;
        let r = rows.get(index).ok_or_else(|| {
            fail(ApdStatus::InvalidArgument, format!("index {index} out of range ({} rounds)", rows.len()))
        })?;
        *out = r.into();
        Ok(())
    })
}

/// Final aggregate and dual value. Lengths follow [`apd_problem_dims`].
///
/// # Safety
/// Buffers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn apd_trace_final(
    t: *const ApdTrace,
    x: *mut f64,
    x_len: usize,
    mu: *mut f64,
    mu_len: usize,
) -> ApdStatus {
    guard(|| {
        non_null(t, "trace")?;
        let tr = &(*t).trace;
        if x_len < tr.final_x.len() || mu_len < tr.final_mu.len() {
            return Err(fail(
                ApdStatus::BufferTooSmall,
                format!("need x_len >= {} and mu_len >= {}", tr.final_x.len(), tr.final_mu.len()),
            ));
        }
        non_null(x, "x")?;
        non_null(mu, "mu")?;
        std::slice::from_raw_parts_mut(x, tr.final_x.len()).copy_from_slice(&tr.final_x);
        std::slice::from_raw_parts_mut(mu, tr.final_mu.len()).copy_from_slice(&tr.final_mu);
        Ok(())
    })
}

/// Write the per-round CSV to `path`.
///
/// # Safety
/// `t` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn apd_trace_write_csv(t: *const ApdTrace, path: *const c_char) -> ApdStatus {
    guard(|| {
        non_null(t, "trace")?;
        let path = path_arg(path, "path")?;
        let f = std::fs::File::create(path).map_err(|e| fail(ApdStatus::Io, format!("{path}: {e}")))?;
        check((*t).trace.write_csv(std::io::BufWriter::new(f)))
    })
}

/// # Safety
/// `t` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn apd_trace_free(t: *mut ApdTrace) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
