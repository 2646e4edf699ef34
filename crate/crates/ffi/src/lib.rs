//! C ABI for loading graphs and task suites, querying distances and running
//! oracle episodes.
//!
//! Conventions:
//!
//! - Every fallible function returns an `int` status, `UN_OK` on success.
//! - Results are written through out-pointers, which are left untouched on
//!   failure.
//! - After a failure, `un_last_error_message` describes it. The string is
//!   owned by the library and valid until the next call on the same thread.
//! - Handles returned by `*_load` must be released with the matching
//!   `*_free`; passing NULL to a free function is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use urbannav::bench::{Task, TaskFile};
use urbannav::episode::{run_episode, Env, EpisodeConfig, Termination};
use urbannav::geo::{geodesic_distance, LatLon};
use urbannav::graph::{load_graph, NavGraph, TopoDistance};
use urbannav::metrics::evaluate;
use urbannav::policy::OraclePolicy;
use urbannav::strategy::{MemoryStore, StrategyStack};

pub const UN_OK: c_int = 0;
/// A required pointer argument was NULL.
pub const UN_ERR_NULL: c_int = 1;
/// A string argument was not valid UTF-8.
pub const UN_ERR_UTF8: c_int = 2;
/// A file could not be read or parsed, or an episode could not start.
pub const UN_ERR_INVALID_INPUT: c_int = 3;
/// A node id is not in the graph.
pub const UN_ERR_NOT_FOUND: c_int = 4;
/// A numeric argument is out of range.
pub const UN_ERR_RANGE: c_int = 5;
/// The library panicked; the handle involved should not be reused.
pub const UN_ERR_PANIC: c_int = 6;

/// Returned by `un_graph_topo_distance` when the target is unreachable.
pub const UN_UNREACHABLE: i64 = -1;

pub const UN_TERMINATION_STOPPED: c_int = 0;
pub const UN_TERMINATION_STEP_CAP: c_int = 1;
pub const UN_TERMINATION_ERROR: c_int = 2;

/// Opaque navigation graph.
pub struct UnGraph(NavGraph);

/// Opaque task suite.
pub struct UnTasks(Vec<Task>);

/// Metrics of one episode.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UnEpisodeMetrics {
    /// One of the `UN_TERMINATION_*` values.
    pub termination: c_int,
    pub tce: bool,
    pub tcp_50m: bool,
    pub tcc: bool,
    pub spl: f64,
    pub spd_m: f64,
    pub ndtw: f64,
    pub steps: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(c_int, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Run `f`, turning failures and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UN_OK,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            UN_ERR_PANIC
        }
    }
}

fn null(name: &str) -> Failure {
    Failure(UN_ERR_NULL, format!("{name} is NULL"))
}

unsafe fn as_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(UN_ERR_UTF8, format!("{name}: {e}")))
}

/// Message for the most recent failure on this thread, or NULL.
#[no_mangle]
pub extern "C" fn un_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn un_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Load a graph JSON file.
///
/// # Safety
/// `path` must be NULL or a NUL-terminated string; `out` must be NULL or
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn un_graph_load(path: *const c_char, out_graph: *mut *mut UnGraph) -> c_int {
    guard(|| {
        let path = string(path, "path")?;
        let slot = out(out_graph, "out_graph")?;
        let g = load_graph(path).map_err(|e| Failure(UN_ERR_INVALID_INPUT, e.to_string()))?;
        *slot = Box::into_raw(Box::new(UnGraph(g)));
        Ok(())
    })
}

/// Release a graph.
///
/// # Safety
/// `graph` must be NULL or a handle from `un_graph_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn un_graph_free(graph: *mut UnGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be NULL or a live handle; `out_count` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn un_graph_node_count(graph: *const UnGraph, out_count: *mut usize) -> c_int {
    guard(|| {
        *out(out_count, "out_count")? = as_ref(graph, "graph")?.0.node_count();
        Ok(())
    })
}

/// # Safety
/// `graph` must be NULL or a live handle; `out_count` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn un_graph_edge_count(graph: *const UnGraph, out_count: *mut usize) -> c_int {
    guard(|| {
        *out(out_count, "out_count")? = as_ref(graph, "graph")?.0.edge_count();
        Ok(())
    })
}

/// Minimum hop count between two nodes, or `UN_UNREACHABLE`.
///
/// # Safety
/// Pointers must be NULL or valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn un_graph_topo_distance(
    graph: *const UnGraph,
    from: *const c_char,
    to: *const c_char,
    out_hops: *mut i64,
) -> c_int {
    guard(|| {
        let g = &as_ref(graph, "graph")?.0;
        let (from, to) = (string(from, "from")?, string(to, "to")?);
        let slot = out(out_hops, "out_hops")?;
        let d = g.topo_distance(from, to).map_err(|e| Failure(UN_ERR_NOT_FOUND, e.to_string()))?;
        *slot = match d {
            TopoDistance::Steps(s) => i64::from(s),
            TopoDistance::Unreachable => UN_UNREACHABLE,
        };
        Ok(())
    })
}

/// Great-circle distance in meters between two points in degrees.
///
/// # Safety
/// `out_m` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn un_geodesic_distance(lat1: f64, lon1: f64, lat2: f64, lon2: f64, out_m: *mut f64) -> c_int {
    guard(|| {
        let slot = out(out_m, "out_m")?;
        let a = LatLon::new(lat1, lon1).map_err(|e| Failure(UN_ERR_RANGE, e.to_string()))?;
        let b = LatLon::new(lat2, lon2).map_err(|e| Failure(UN_ERR_RANGE, e.to_string()))?;
        *slot = geodesic_distance(a, b);
        Ok(())
    })
}

/// Load a task suite JSON file.
///
/// # Safety
/// As for `un_graph_load`.
#[no_mangle]
pub unsafe extern "C" fn un_tasks_load(path: *const c_char, out_tasks: *mut *mut UnTasks) -> c_int {
    guard(|| {
        let path = string(path, "path")?;
        let slot = out(out_tasks, "out_tasks")?;
        let t = TaskFile::read(path).map_err(|e| Failure(UN_ERR_INVALID_INPUT, e.to_string()))?;
        *slot = Box::into_raw(Box::new(UnTasks(t.tasks)));
        Ok(())
    })
}

/// Release a task suite.
///
/// # Safety
/// `tasks` must be NULL or a handle from `un_tasks_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn un_tasks_free(tasks: *mut UnTasks) {
    if !tasks.is_null() {
        drop(Box::from_raw(tasks));
    }
}

/// # Safety
/// `tasks` must be NULL or a live handle; `out_count` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn un_tasks_count(tasks: *const UnTasks, out_count: *mut usize) -> c_int {
    guard(|| {
        *out(out_count, "out_count")? = as_ref(tasks, "tasks")?.0.len();
        Ok(())
    })
}

/// Run the shortest-path oracle on task `index` and report its metrics.
///
/// # Safety
/// Handles must be NULL or live; `out_metrics` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn un_run_oracle_episode(
    graph: *const UnGraph,
    tasks: *const UnTasks,
    index: usize,
    out_metrics: *mut UnEpisodeMetrics,
) -> c_int {
    guard(|| {
        let g = &as_ref(graph, "graph")?.0;
        let ts = &as_ref(tasks, "tasks")?.0;
        let slot = out(out_metrics, "out_metrics")?;
        let task = ts
            .get(index)
            .ok_or_else(|| Failure(UN_ERR_RANGE, format!("task index {index} out of range (suite has {})", ts.len())))?;
        let invalid = |e: String| Failure(UN_ERR_INVALID_INPUT, e);
        let traj = run_episode(
            &Env::new(g),
            task,
            &OraclePolicy,
            &StrategyStack::none(),
            &mut MemoryStore::new(&task.id),
            &EpisodeConfig::default(),
        )
        .map_err(|e| invalid(e.to_string()))?;
        let m = evaluate(g, &traj, task).map_err(|e| invalid(e.to_string()))?;
        *slot = UnEpisodeMetrics {
            termination: match m.termination {
                Termination::Stopped => UN_TERMINATION_STOPPED,
                Termination::StepCap => UN_TERMINATION_STEP_CAP,
                Termination::Error => UN_TERMINATION_ERROR,
            },
            tce: m.tce,
            tcp_50m: m.tcp_at(50.0),
            tcc: m.tcc,
            spl: m.spl,
            spd_m: m.spd,
            ndtw: m.ndtw,
            steps: m.steps as u32,
        };
        Ok(())
    })
}
