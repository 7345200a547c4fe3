//! C ABI for the xpanda engine.
//!
//! Every fallible call returns an [`XpandaStatus`]; on failure the message is
//! available from [`xpanda_last_error`] on the same thread. Engines and run
//! results are opaque handles released with their `_free` functions. Strings
//! returned by accessors are borrowed from the handle and stay valid until it
//! is freed.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use xpanda::backend::{Backend, Scenario, ScriptedBackend};
use xpanda::config::RunConfig;
use xpanda::orchestrator::{EngineConfig, RunErrorKind};
use xpanda::tokenize::Tokenizer;
use xpanda::{aov_sim, eval, partitioner, trace, Engine};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XpandaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    InvalidArgument = 4,
    RunFailed = 5,
    BackendFailed = 6,
    Panic = 7,
}

/// Partition parameters; see `xpanda_partition_config_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XpandaPartitionConfig {
    pub n: usize,
    pub overlap_min: usize,
    pub overlap_max: usize,
    pub alpha: f64,
    pub max_size: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct XpandaPartitionPlan {
    pub w: usize,
    pub chunk_count: usize,
    pub stride: usize,
    pub size: usize,
    pub delta: usize,
}

impl From<XpandaPartitionConfig> for partitioner::PartitionConfig {
    fn from(c: XpandaPartitionConfig) -> Self {
        Self {
            n: c.n,
            overlap_min: c.overlap_min,
            overlap_max: c.overlap_max,
            alpha: c.alpha,
            max_size: c.max_size,
        }
    }
}

/// Opaque engine handle.
pub struct XpandaEngine {
    config: EngineConfig,
    backend: Box<dyn Backend>,
    tokenizer: Box<dyn Tokenizer>,
}

/// Opaque run result handle.
pub struct XpandaRunResult {
    answer: CString,
    concluded: bool,
    replay_count: usize,
    trace: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl std::fmt::Display) {
    let c = lossless_cstring(msg.to_string());
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Truncates at the first NUL rather than failing.
fn lossless_cstring(s: String) -> CString {
    match CString::new(s) {
        Ok(c) => c,
        Err(e) => {
            let nul = e.nul_position();
            let mut bytes = e.into_vec();
            bytes.truncate(nul);
            CString::new(bytes).expect("no interior NUL after truncation")
        }
    }
}

type FfiResult<T> = Result<T, (XpandaStatus, String)>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> XpandaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XpandaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            XpandaStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err((XpandaStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        (
            XpandaStatus::InvalidUtf8,
            format!("{name} is not valid UTF-8"),
        )
    })
}

fn out_arg<T>(p: *mut T, name: &str) -> FfiResult<*mut T> {
    if p.is_null() {
        Err((XpandaStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(p)
    }
}

/// Message of the last failed call on this thread; empty if none.
#[no_mangle]
pub extern "C" fn xpanda_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn xpanda_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an engine from TOML configuration text. When `scenario_json` is not
/// null the engine uses a scripted backend with those rules, whatever the
/// configuration says.
#[no_mangle]
pub unsafe extern "C" fn xpanda_engine_new(
    config_toml: *const c_char,
    scenario_json: *const c_char,
    out: *mut *mut XpandaEngine,
) -> XpandaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(config_toml, "config_toml")?;
        let cfg =
            RunConfig::from_toml(text).map_err(|e| (XpandaStatus::InvalidConfig, e.to_string()))?;
        let backend: Box<dyn Backend> = if scenario_json.is_null() {
            cfg.build_backend()
                .map_err(|e| (XpandaStatus::InvalidConfig, e.to_string()))?
        } else {
            let json = str_arg(scenario_json, "scenario_json")?;
            let scenario = Scenario::from_json(json)
                .map_err(|e| (XpandaStatus::InvalidConfig, format!("scenario: {e}")))?;
            Box::new(ScriptedBackend::new(scenario))
        };
        let config = cfg
            .engine_config()
            .map_err(|e| (XpandaStatus::InvalidConfig, e.to_string()))?;
        let engine = XpandaEngine {
            config,
            backend,
            tokenizer: cfg.tokenizer(),
        };
        *out = Box::into_raw(Box::new(engine));
        Ok(())
    })
}

/// Builds an engine from a TOML configuration file.
#[no_mangle]
pub unsafe extern "C" fn xpanda_engine_from_file(
    path: *const c_char,
    out: *mut *mut XpandaEngine,
) -> XpandaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let cfg = RunConfig::load(path.as_ref())
            .map_err(|e| (XpandaStatus::InvalidConfig, e.to_string()))?;
        let backend = cfg
            .build_backend()
            .map_err(|e| (XpandaStatus::InvalidConfig, e.to_string()))?;
        let config = cfg
            .engine_config()
            .map_err(|e| (XpandaStatus::InvalidConfig, e.to_string()))?;
        *out = Box::into_raw(Box::new(XpandaEngine {
            config,
            backend,
            tokenizer: cfg.tokenizer(),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn xpanda_engine_free(engine: *mut XpandaEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Runs one query over `context`. On success `*out` receives a result handle.
#[no_mangle]
pub unsafe extern "C" fn xpanda_engine_run(
    engine: *const XpandaEngine,
    query: *const c_char,
    context: *const c_char,
    out: *mut *mut XpandaRunResult,
) -> XpandaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let engine = engine
            .as_ref()
            .ok_or((XpandaStatus::NullPointer, "engine is null".to_string()))?;
        let query = str_arg(query, "query")?;
        let context = str_arg(context, "context")?;
        let runner = Engine::new(
            &engine.config,
            engine.backend.as_ref(),
            engine.tokenizer.as_ref(),
        );
        let result = runner.run(query, context).map_err(|e| {
            let status = match e.kind {
                RunErrorKind::Backend(_) => XpandaStatus::BackendFailed,
                _ => XpandaStatus::RunFailed,
            };
            (status, e.to_string())
        })?;
        let mrt = engine
            .config
            .mrt
            .unwrap_or(result.chunk_count.saturating_sub(1));
        let trace_text = trace::to_jsonl("ffi", query, mrt, &result);
        *out = Box::into_raw(Box::new(XpandaRunResult {
            answer: lossless_cstring(result.answer),
            concluded: result.concluded,
            replay_count: result.replay_count,
            trace: lossless_cstring(trace_text),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn xpanda_result_answer(result: *const XpandaRunResult) -> *const c_char {
    result.as_ref().map_or(ptr::null(), |r| r.answer.as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn xpanda_result_concluded(result: *const XpandaRunResult) -> bool {
    result.as_ref().is_some_and(|r| r.concluded)
}

#[no_mangle]
pub unsafe extern "C" fn xpanda_result_replay_count(result: *const XpandaRunResult) -> usize {
    result.as_ref().map_or(0, |r| r.replay_count)
}

/// Run trace as JSON Lines.
#[no_mangle]
pub unsafe extern "C" fn xpanda_result_trace(result: *const XpandaRunResult) -> *const c_char {
    result.as_ref().map_or(ptr::null(), |r| r.trace.as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn xpanda_result_free(result: *mut XpandaRunResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

#[no_mangle]
pub extern "C" fn xpanda_partition_config_default() -> XpandaPartitionConfig {
    let d = partitioner::PartitionConfig::default();
    XpandaPartitionConfig {
        n: d.n,
        overlap_min: d.overlap_min,
        overlap_max: d.overlap_max,
        alpha: d.alpha,
        max_size: d.max_size,
    }
}

#[no_mangle]
pub unsafe extern "C" fn xpanda_plan_partition(
    w: usize,
    config: *const XpandaPartitionConfig,
    out: *mut XpandaPartitionPlan,
) -> XpandaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let cfg: partitioner::PartitionConfig = (*config
            .as_ref()
            .ok_or((XpandaStatus::NullPointer, "config is null".to_string()))?)
        .into();
        cfg.validate()
            .map_err(|e| (XpandaStatus::InvalidConfig, e.to_string()))?;
        let p = partitioner::plan_partition(w, &cfg);
        *out = XpandaPartitionPlan {
            w: p.w,
            chunk_count: p.chunk_count,
            stride: p.stride,
            size: p.size,
            delta: p.delta,
        };
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn xpanda_token_f1(
    prediction: *const c_char,
    gold: *const c_char,
    out: *mut f64,
) -> XpandaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = eval::token_f1(str_arg(prediction, "prediction")?, str_arg(gold, "gold")?);
        Ok(())
    })
}

/// Exact match against `gold_count` gold strings.
#[no_mangle]
pub unsafe extern "C" fn xpanda_exact_match(
    prediction: *const c_char,
    golds: *const *const c_char,
    gold_count: usize,
    out: *mut u8,
) -> XpandaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let pred = str_arg(prediction, "prediction")?;
        if golds.is_null() && gold_count > 0 {
            return Err((XpandaStatus::NullPointer, "golds is null".into()));
        }
        let mut list = Vec::with_capacity(gold_count);
        for i in 0..gold_count {
            list.push(str_arg(*golds.add(i), "gold")?);
        }
        *out = eval::exact_match(pred, &list);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn xpanda_seq_match_ratio(
    a: *const c_char,
    b: *const c_char,
    out: *mut f64,
) -> XpandaStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = eval::seq_match_ratio(str_arg(a, "a")?, str_arg(b, "b")?);
        Ok(())
    })
}

/// Resolves a row-major `x` by `y` rank matrix with at most `mrt` replays.
#[no_mangle]
pub unsafe extern "C" fn xpanda_aov_resolve(
    ranks: *const u32,
    x: usize,
    y: usize,
    mrt: usize,
    out_success: *mut bool,
    out_scans: *mut usize,
) -> XpandaStatus {
    guard(|| {
        let out_success = out_arg(out_success, "out_success")?;
        let out_scans = out_arg(out_scans, "out_scans")?;
        if ranks.is_null() {
            return Err((XpandaStatus::NullPointer, "ranks is null".into()));
        }
        let len = x
            .checked_mul(y)
            .ok_or((XpandaStatus::InvalidArgument, "x * y overflows".to_string()))?;
        let flat = std::slice::from_raw_parts(ranks, len);
        let rows = if y == 0 {
            Vec::new()
        } else {
            flat.chunks(y)
                .map(|r| r.iter().map(|&v| v as usize).collect())
                .collect()
        };
        let m = aov_sim::DependencyMatrix::new(rows)
            .map_err(|e| (XpandaStatus::InvalidArgument, e.to_string()))?;
        let r = aov_sim::resolve(&m, mrt);
        *out_success = r.success;
        *out_scans = r.scans;
        Ok(())
    })
}
