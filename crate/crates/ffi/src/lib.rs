//! C ABI over the `coreplan` library.
//!
//! Every fallible function returns a [`CpStatus`] and writes results through
//! out-pointers. On failure, [`cp_last_error`] returns a message for the
//! calling thread. Handles are opaque and must be released with the matching
//! `*_free` function; strings returned by `*_to_json` are released with
//! [`cp_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use coreplan::executor::{self, Execution};
use coreplan::planner::{self, Plan, PlanConfig};
use coreplan::ppr::{self, PprParamsInput};
use coreplan::workload;
use coreplan::{Error, Graph};

/// Result codes. The first four agree with the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CpStatus {
    Ok = 0,
    InvalidArgument = 1,
    Infeasible = 2,
    ResourceGate = 3,
    Parse = 4,
    Io = 5,
    NullPointer = 6,
    OutOfRange = 7,
    NonConvergence = 8,
    BufferTooSmall = 9,
    Internal = 10,
}

/// A loaded graph.
pub struct CpGraph {
    inner: Graph,
}

/// A slot plan.
pub struct CpPlan {
    inner: Plan,
}

/// The result of simulating a plan.
pub struct CpExecution {
    inner: Execution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CpStatus {
    match err {
        Error::Parse { .. } | Error::EmptyInput | Error::Json(_) => CpStatus::Parse,
        Error::VertexOutOfRange { .. } => CpStatus::OutOfRange,
        Error::Validation(_) => CpStatus::InvalidArgument,
        Error::Infeasible(_) => CpStatus::Infeasible,
        Error::ResourceGate { .. } => CpStatus::ResourceGate,
        Error::NonConvergence { .. } => CpStatus::NonConvergence,
        Error::Io(_) => CpStatus::Io,
        Error::QueryFailed { .. } | Error::Internal(_) => CpStatus::Internal,
    }
}

struct Failure(CpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CpStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CpStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside coreplan".into());
            CpStatus::Internal
        }
    }
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn fill(out: *mut f64, len: usize, values: &[f64]) -> Result<(), Failure> {
    if len < values.len() {
        return Err(Failure(
            CpStatus::BufferTooSmall,
            format!("buffer holds {len} values but {} are needed", values.len()),
        ));
    }
    if out.is_null() {
        return Err(null("output buffer"));
    }
    std::slice::from_raw_parts_mut(out, values.len()).copy_from_slice(values);
    Ok(())
}

fn json_string<T: serde::Serialize>(value: &T) -> Result<CString, Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::from(Error::from(e)))?;
    CString::new(text).map_err(|e| Failure(CpStatus::Internal, e.to_string()))
}

/// Message describing the last failure on this thread, or null after a
/// success. Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer returned by a `*_to_json` function that has
/// not been freed yet.
#[no_mangle]
pub unsafe extern "C" fn cp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a whitespace-separated edge list from `path`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_load(path: *const c_char, directed: bool, out: *mut *mut CpGraph) -> CpStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(CpStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
        let g = coreplan::graph::load_edge_list_file(Path::new(path), directed)?;
        write(out, Box::into_raw(Box::new(CpGraph { inner: g })), "out")
    })
}

/// Builds a graph from `len` edges `(src[i], dst[i])`.
///
/// # Safety
/// `src` and `dst` must point to `len` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_from_edges(
    src: *const u32,
    dst: *const u32,
    len: usize,
    directed: bool,
    out: *mut *mut CpGraph,
) -> CpStatus {
    guard(|| {
        let src = slice(src, len, "src")?;
        let dst = slice(dst, len, "dst")?;
        let edges: Vec<(u32, u32)> = src.iter().copied().zip(dst.iter().copied()).collect();
        let g = Graph::from_edges(&edges, directed)?;
        write(out, Box::into_raw(Box::new(CpGraph { inner: g })), "out")
    })
}

/// # Safety
/// `g` must be null or a handle from `cp_graph_load`/`cp_graph_from_edges`.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_free(g: *mut CpGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Vertex count, or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_vertex_count(g: *const CpGraph) -> usize {
    g.as_ref().map_or(0, |g| g.inner.n())
}

/// Stored arc count (undirected edges count twice), or 0 for a null handle.
///
/// # Safety
/// `g` must be null or a live graph handle.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_edge_count(g: *const CpGraph) -> usize {
    g.as_ref().map_or(0, |g| g.inner.m())
}

/// # Safety
/// `g` must be a live graph handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_graph_out_degree(g: *const CpGraph, v: u32, out: *mut usize) -> CpStatus {
    guard(|| {
        let g = deref(g, "graph")?;
        write(out, g.inner.out_degree(v)?, "out")
    })
}

/// Approximate PPR from `source` with default accuracy parameters for the
/// graph. Writes one score per vertex into `scores` (`len >= n`).
///
/// # Safety
/// `g` must be a live graph handle; `scores` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn cp_ppr_query(
    g: *const CpGraph,
    source: u32,
    alpha: f64,
    epsilon: f64,
    seed: u64,
    scores: *mut f64,
    len: usize,
) -> CpStatus {
    guard(|| {
        let g = &deref(g, "graph")?.inner;
        let input = PprParamsInput {
            alpha,
            epsilon,
            ..PprParamsInput::defaults_for(g.n())
        };
        let params = ppr::derive_params(g, &input)?;
        let est = ppr::fora_query(g, source, &params, seed)?;
        fill(scores, len, &est.to_dense(g.n()))
    })
}

/// Exact PPR by power iteration, for small graphs.
///
/// # Safety
/// `g` must be a live graph handle; `scores` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn cp_ppr_exact(
    g: *const CpGraph,
    source: u32,
    alpha: f64,
    tolerance: f64,
    max_iterations: usize,
    scores: *mut f64,
    len: usize,
) -> CpStatus {
    guard(|| {
        let g = &deref(g, "graph")?.inner;
        let pi = ppr::power_iteration_ppr(g, source, alpha, tolerance, max_iterations)?;
        fill(scores, len, &pi)
    })
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_sample_size(z: f64, p: f64, e: f64, out: *mut usize) -> CpStatus {
    guard(|| write(out, planner::sample_size(z, p, e)?, "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_z_for_confidence(level: u32, out: *mut f64) -> CpStatus {
    guard(|| write(out, planner::z_for_confidence(level)?, "out"))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_lemma1_bound(queries: usize, deadline: f64, t_max: f64, out: *mut f64) -> CpStatus {
    guard(|| write(out, planner::lemma1_bound(queries, deadline, t_max)?, "out"))
}

/// Hoeffding baseline core count (unrounded).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_hoeffding_bound(
    queries: usize,
    deadline: f64,
    t_bar: f64,
    t_hat: f64,
    samples: usize,
    p_f: f64,
    out: *mut f64,
) -> CpStatus {
    guard(|| write(out, planner::hoeffding_bound(queries, deadline, t_bar, t_hat, samples, p_f)?, "out"))
}

/// Plan for unlimited cores from the longest sampled query time `t_max`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_ideal(
    queries: usize,
    deadline: f64,
    samples: usize,
    t_max: f64,
    out: *mut *mut CpPlan,
) -> CpStatus {
    guard(|| {
        let plan = planner::plan_ideal(queries, deadline, samples, t_max)?;
        write(out, Box::into_raw(Box::new(CpPlan { inner: plan })), "out")
    })
}

/// Plan under a core limit from `samples` sample durations in nanoseconds,
/// timed on `c` cores. `c_max == 0` means no limit.
///
/// # Safety
/// `durations_ns` must point to `samples` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_real(
    queries: usize,
    deadline: f64,
    c_max: usize,
    d: f64,
    c: usize,
    durations_ns: *const u64,
    samples: usize,
    out: *mut *mut CpPlan,
) -> CpStatus {
    guard(|| {
        let durations = slice(durations_ns, samples, "durations")?;
        let mut config = PlanConfig::new(queries, deadline);
        config.c_max = (c_max > 0).then_some(c_max);
        config.d = d;
        config.c = c;
        config.validate()?;
        let stats = workload::preprocess_virtual(durations, samples, c, config.t_hat_factor)?;
        let plan = planner::plan_real(&config, &stats)?;
        write(out, Box::into_raw(Box::new(CpPlan { inner: plan })), "out")
    })
}

/// # Safety
/// `plan` must be null or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_free(plan: *mut CpPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Cores per slot, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_cores(plan: *const CpPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.inner.k)
}

/// Slot count, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_slots(plan: *const CpPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.inner.ell)
}

/// Sample size, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a live plan handle.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_samples(plan: *const CpPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.inner.s)
}

/// # Safety
/// `plan` must be a live plan handle; `out` must be writable. The string is
/// released with `cp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn cp_plan_to_json(plan: *const CpPlan, out: *mut *mut c_char) -> CpStatus {
    guard(|| {
        let plan = deref(plan, "plan")?;
        write(out, json_string(&plan.inner)?.into_raw(), "out")
    })
}

/// Runs `plan` in virtual time with one duration (ns) per query.
///
/// # Safety
/// `plan` must be a live plan handle; `durations_ns` must point to `len`
/// readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cp_simulate(
    plan: *const CpPlan,
    durations_ns: *const u64,
    len: usize,
    c: usize,
    out: *mut *mut CpExecution,
) -> CpStatus {
    guard(|| {
        let plan = deref(plan, "plan")?;
        let durations = slice(durations_ns, len, "durations")?;
        let exec = executor::simulate(&plan.inner, durations, c, 2.0)?;
        write(out, Box::into_raw(Box::new(CpExecution { inner: exec })), "out")
    })
}

/// # Safety
/// `exec` must be null or a live execution handle.
#[no_mangle]
pub unsafe extern "C" fn cp_execution_free(exec: *mut CpExecution) {
    if !exec.is_null() {
        drop(Box::from_raw(exec));
    }
}

/// Whether the deadline check passed; false for a null handle.
///
/// # Safety
/// `exec` must be null or a live execution handle.
#[no_mangle]
pub unsafe extern "C" fn cp_execution_feasible(exec: *const CpExecution) -> bool {
    exec.as_ref().is_some_and(|e| e.inner.report.feasible)
}

/// Left-hand side of the deadline check in seconds; NaN for a null handle.
///
/// # Safety
/// `exec` must be null or a live execution handle.
#[no_mangle]
pub unsafe extern "C" fn cp_execution_check_value(exec: *const CpExecution) -> f64 {
    exec.as_ref().map_or(f64::NAN, |e| e.inner.report.check_value)
}

/// # Safety
/// `exec` must be a live execution handle; `out` must be writable. The
/// string is released with `cp_string_free`.
#[no_mangle]
pub unsafe extern "C" fn cp_execution_to_json(exec: *const CpExecution, out: *mut *mut c_char) -> CpStatus {
    guard(|| {
        let exec = deref(exec, "execution")?;
        write(out, json_string(&exec.inner.report)?.into_raw(), "out")
    })
}
