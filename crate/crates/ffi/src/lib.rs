//! C ABI over the linkpred toolkit.
//!
//! Every function returns an [`LpStatus`]. On failure the message of the
//! most recent error on the calling thread is available from
//! [`lp_last_error_message`]. Objects cross the boundary as opaque handles
//! that the caller releases with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use linkpred::baselines::{common_neighbors, pagerank, PageRankConfig};
use linkpred::config::ExperimentConfig;
use linkpred::error::{Category, Error};
use linkpred::experiment::{run_experiment, RunPlan, RunSummary};
use linkpred::graph::{normalized_adjacency, Edge, TemporalGraph};
use linkpred::metrics::{auc_exact, auc_sampled, ks_statistic, map_at_k, ndcg_at_k, RankedPredictions, ScoredEvaluation};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Numerical = 5,
    Panic = 6,
}

/// Which methods [`lp_run_experiment`] trains and evaluates.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpPlan {
    /// Configured variant plus baselines.
    Evaluate = 0,
    /// Configured variant only.
    Train = 1,
    /// Every ablation variant plus baselines.
    Ablate = 2,
    /// Baselines only.
    Baselines = 3,
}

/// Snapshot-`t` graph.
pub struct LpGraph(TemporalGraph);

/// Experiment configuration.
pub struct LpConfig(ExperimentConfig);

/// Finished experiment run.
pub struct LpRun {
    summary: RunSummary,
    report: CString,
    dir: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

struct Failure(LpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match (&e, e.category()) {
            (Error::InvalidArgument(_), _) => LpStatus::InvalidArgument,
            (_, Category::Config) => LpStatus::Config,
            (_, Category::Data) => LpStatus::Data,
            (_, Category::Numerical) => LpStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(LpStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(LpStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LpStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            LpStatus::Panic
        }
    }
}

unsafe fn slice_in<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(p, len))
}

unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn str_in<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread; empty when none failed.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn lp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

// ------------------------------------------------------------------ graph

/// Builds a graph over nodes `0..node_count` from `edge_count` directed
/// edges `src[i] -> dst[i]`.
///
/// # Safety
/// `src` and `dst` must point to `edge_count` readable values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn lp_graph_new(node_count: usize, src: *const usize, dst: *const usize, edge_count: usize, out: *mut *mut LpGraph) -> LpStatus {
    guard(|| {
        let src = slice_in(src, edge_count, "src")?;
        let dst = slice_in(dst, edge_count, "dst")?;
        let edges: Vec<Edge> = src.iter().copied().zip(dst.iter().copied()).collect();
        let g = TemporalGraph::from_edges(node_count, &edges, &[])?;
        write(out, Box::into_raw(Box::new(LpGraph(g))), "out")
    })
}

/// # Safety
/// `graph` must come from [`lp_graph_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lp_graph_free(graph: *mut LpGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_graph_node_count(graph: *const LpGraph, out: *mut usize) -> LpStatus {
    guard(|| write(out, handle(graph, "graph")?.0.node_count(), "out"))
}

/// Shared neighbours of `u` and `q` in the symmetrized graph.
///
/// # Safety
/// `graph` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_common_neighbors(graph: *const LpGraph, u: usize, q: usize, out: *mut usize) -> LpStatus {
    guard(|| {
        let n = common_neighbors(&handle(graph, "graph")?.0, u, q)?;
        write(out, n, "out")
    })
}

/// PageRank of every node into `out[0..len]`; `len` must equal the node
/// count.
///
/// # Safety
/// `graph` must be a live handle and `out` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn lp_pagerank(graph: *const LpGraph, damping: f64, out: *mut f64, len: usize) -> LpStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.0;
        if len != g.node_count() {
            return Err(invalid(format!("output holds {len} values for {} nodes", g.node_count())));
        }
        let cfg = PageRankConfig {
            damping,
            ..PageRankConfig::default()
        };
        let ranks = pagerank(g, &cfg)?;
        slice_out(out, len, "out")?.copy_from_slice(&ranks);
        Ok(())
    })
}

/// Dense row-major `D^-1/2 (A + I) D^-1/2` into `out[0..len]`, with
/// `len = N * N`.
///
/// # Safety
/// `graph` must be a live handle and `out` must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn lp_normalized_adjacency(graph: *const LpGraph, out: *mut f64, len: usize) -> LpStatus {
    guard(|| {
        let g = &handle(graph, "graph")?.0;
        let n = g.node_count();
        if len != n * n {
            return Err(invalid(format!("output holds {len} values, need {}", n * n)));
        }
        slice_out(out, len, "out")?.copy_from_slice(normalized_adjacency(g).data());
        Ok(())
    })
}

// ------------------------------------------------------------------ metrics

unsafe fn evaluation(pos: *const f64, n_pos: usize, neg: *const f64, n_neg: usize) -> Result<ScoredEvaluation, Failure> {
    let pos = slice_in(pos, n_pos, "pos")?.to_vec();
    let neg = slice_in(neg, n_neg, "neg")?.to_vec();
    Ok(ScoredEvaluation::new(pos, neg)?)
}

unsafe fn ranking(relevance: *const u8, len: usize) -> Result<RankedPredictions, Failure> {
    let rel: Vec<bool> = slice_in(relevance, len, "relevance")?.iter().map(|r| *r != 0).collect();
    Ok(RankedPredictions::from_relevance(&rel))
}

/// Exact AUC over every positive/negative pair (ties count one half).
///
/// # Safety
/// Score pointers must hold the stated counts; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_auc_exact(pos: *const f64, n_pos: usize, neg: *const f64, n_neg: usize, out: *mut f64) -> LpStatus {
    guard(|| write(out, auc_exact(&evaluation(pos, n_pos, neg, n_neg)?), "out"))
}

/// AUC estimated from `samples` seeded positive/negative draws.
///
/// # Safety
/// Score pointers must hold the stated counts; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_auc_sampled(pos: *const f64, n_pos: usize, neg: *const f64, n_neg: usize, samples: usize, seed: u64, out: *mut f64) -> LpStatus {
    guard(|| {
        let auc = auc_sampled(&evaluation(pos, n_pos, neg, n_neg)?, samples, seed)?;
        write(out, auc, "out")
    })
}

/// Kolmogorov-Smirnov statistic of the two score samples.
///
/// # Safety
/// Score pointers must hold the stated counts; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_ks_statistic(pos: *const f64, n_pos: usize, neg: *const f64, n_neg: usize, out: *mut f64) -> LpStatus {
    guard(|| write(out, ks_statistic(&evaluation(pos, n_pos, neg, n_neg)?), "out"))
}

/// NDCG@K of a ranking given as relevance flags (non-zero = relevant) in
/// rank order.
///
/// # Safety
/// `relevance` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_ndcg_at_k(relevance: *const u8, len: usize, k: usize, out: *mut f64) -> LpStatus {
    guard(|| write(out, ndcg_at_k(&ranking(relevance, len)?, k)?, "out"))
}

/// AP@K of a ranking given as relevance flags in rank order.
///
/// # Safety
/// `relevance` must hold `len` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_map_at_k(relevance: *const u8, len: usize, k: usize, test_size: usize, out: *mut f64) -> LpStatus {
    guard(|| write(out, map_at_k(&ranking(relevance, len)?, k, test_size)?, "out"))
}

// ------------------------------------------------------------------ experiments

/// Default configuration (synthetic data).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lp_config_new(out: *mut *mut LpConfig) -> LpStatus {
    guard(|| write(out, Box::into_raw(Box::new(LpConfig(ExperimentConfig::default()))), "out"))
}

/// Configuration read from a `key = value` file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_config_from_file(path: *const c_char, out: *mut *mut LpConfig) -> LpStatus {
    guard(|| {
        let path = PathBuf::from(str_in(path, "path")?);
        let cfg = ExperimentConfig::from_file(&path)?;
        write(out, Box::into_raw(Box::new(LpConfig(cfg))), "out")
    })
}

/// Sets one configuration key, as in a config file line.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn lp_config_set(config: *mut LpConfig, key: *const c_char, value: *const c_char) -> LpStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        cfg.0.set(str_in(key, "key")?, str_in(value, "value")?)?;
        Ok(())
    })
}

/// # Safety
/// `config` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lp_config_free(config: *mut LpConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs an experiment and writes its outputs under `out_root`.
///
/// # Safety
/// `config` must be a live handle, `out_root` a NUL-terminated string and
/// `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_run_experiment(config: *const LpConfig, plan: LpPlan, out_root: *const c_char, out: *mut *mut LpRun) -> LpStatus {
    guard(|| {
        let cfg = &handle(config, "config")?.0;
        cfg.validate()?;
        let root = PathBuf::from(str_in(out_root, "out_root")?);
        let plan = match plan {
            LpPlan::Evaluate => RunPlan::evaluate(cfg),
            LpPlan::Train => RunPlan::train_only(cfg),
            LpPlan::Ablate => RunPlan::ablate(cfg),
            LpPlan::Baselines => RunPlan::baselines_only(cfg),
        };
        let summary = run_experiment(cfg, &plan, &root)?;
        let cstring = |s: String| CString::new(s).map_err(|_| invalid("output contains NUL"));
        let run = LpRun {
            report: cstring(summary.report.clone())?,
            dir: cstring(summary.dir.display().to_string())?,
            summary,
        };
        write(out, Box::into_raw(Box::new(run)), "out")
    })
}

/// Report text of a run; owned by the handle.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_run_report(run: *const LpRun) -> *const c_char {
    run.as_ref().map_or(ptr::null(), |r| r.report.as_ptr())
}

/// Output directory of a run; owned by the handle.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_run_dir(run: *const LpRun) -> *const c_char {
    run.as_ref().map_or(ptr::null(), |r| r.dir.as_ptr())
}

/// Mean of `metric` (`auc`, `ks`, `ndcg`, `map`) for `method` over the
/// run's repeats. `k` is ignored for `auc` and `ks`.
///
/// # Safety
/// `run` must be a live handle; strings NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lp_run_metric_mean(run: *const LpRun, method: *const c_char, metric: *const c_char, k: usize, out: *mut f64) -> LpStatus {
    guard(|| {
        let run = handle(run, "run")?;
        let method = str_in(method, "method")?;
        let metric = str_in(metric, "metric")?;
        let k = match metric {
            "auc" | "ks" => None,
            "ndcg" | "map" => Some(k),
            other => return Err(invalid(format!("unknown metric {other:?}"))),
        };
        let m = run
            .summary
            .method(method)
            .ok_or_else(|| invalid(format!("run has no method {method:?}")))?;
        let series = m.series(metric, k);
        if series.is_empty() {
            return Err(invalid(format!("run has no {metric} value at K = {k:?}")));
        }
        write(out, m.mean(metric, k), "out")
    })
}

/// # Safety
/// `run` must come from [`lp_run_experiment`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn lp_run_free(run: *mut LpRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}
