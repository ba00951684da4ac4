//! C ABI for `loopsched`.
//!
//! Objects are opaque handles created by `ls_*_new`/`ls_*_load` and released
//! by the matching `ls_*_free`. Every fallible call returns an [`LsStatus`];
//! on failure [`ls_last_error_message`] describes the most recent error on the
//! calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use loopsched::native::{run_parallel, NativeRunConfig};
use loopsched::sim::{self, CommMode, OverheadModel, PlatformSpec, SimJob, SimOptions, SimResult};
use loopsched::{ChunkPlan, Error, KernelCostModel, KernelKind, KernelProblem, SchedulingTechnique};

/// Status codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsStatus {
    Ok = 0,
    InvalidArgument = 1,
    NullPointer = 2,
    Parse = 3,
    Io = 4,
    Runtime = 5,
    Validation = 6,
    Measurement = 7,
    Panic = 8,
}

/// Scheduling technique selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsTechnique {
    Static = 0,
    SelfScheduling = 1,
    Guided = 2,
    Factoring = 3,
}

impl From<LsTechnique> for SchedulingTechnique {
    fn from(t: LsTechnique) -> Self {
        match t {
            LsTechnique::Static => SchedulingTechnique::Static,
            LsTechnique::SelfScheduling => SchedulingTechnique::SelfScheduling,
            LsTechnique::Guided => SchedulingTechnique::Guided,
            LsTechnique::Factoring => SchedulingTechnique::Factoring,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LsKernel {
    MatMul = 0,
    AdjointConvolution = 1,
}

impl From<LsKernel> for KernelKind {
    fn from(k: LsKernel) -> Self {
        match k {
            LsKernel::MatMul => KernelKind::MatMul,
            LsKernel::AdjointConvolution => KernelKind::AdjointConvolution,
        }
    }
}

/// Opaque chunk plan.
pub struct LsPlan(ChunkPlan);

/// Opaque platform description.
pub struct LsPlatform(PlatformSpec);

/// Opaque simulation result.
pub struct LsSimResult(SimResult);

/// Outcome of a native run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LsNativeStats {
    pub wall_time_s: f64,
    pub parallel_cost: f64,
    pub chunks: u64,
    /// Negative when validation was not requested.
    pub max_relative_error: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(e: &Error) -> LsStatus {
    match e {
        Error::InvalidArgument(_) => LsStatus::InvalidArgument,
        Error::Parse { .. } => LsStatus::Parse,
        Error::Io { .. } => LsStatus::Io,
        Error::Runtime(_) => LsStatus::Runtime,
        Error::Validation(_) => LsStatus::Validation,
        Error::Measurement(_) => LsStatus::Measurement,
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard<F: FnOnce() -> Result<(), LsStatus>>(f: F) -> LsStatus {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(Ok(())) => LsStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            LsStatus::Panic
        }
    }
}

fn fail(e: Error) -> LsStatus {
    let s = status_of(&e);
    set_error(e.to_string());
    s
}

fn null(what: &str) -> LsStatus {
    set_error(format!("{what} is null"));
    LsStatus::NullPointer
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, LsStatus> {
    if p.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(p).to_str().map(Path::new).map_err(|_| {
        set_error("path is not valid UTF-8".into());
        LsStatus::InvalidArgument
    })
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ls_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Builds the chunk plan for `total` iterations on `workers` workers.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ls_plan_new(technique: LsTechnique, total: u64, workers: u64, out: *mut *mut LsPlan) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let plan = loopsched::build_chunk_plan(technique.into(), total, workers).map_err(fail)?;
        *out = Box::into_raw(Box::new(LsPlan(plan)));
        Ok(())
    })
}

/// Number of chunks, or 0 for a null handle.
///
/// # Safety
/// `plan` must be null or a handle from [`ls_plan_new`].
#[no_mangle]
pub unsafe extern "C" fn ls_plan_len(plan: *const LsPlan) -> u64 {
    plan.as_ref().map_or(0, |p| p.0.len() as u64)
}

/// Size of chunk `step`, or 0 past the end.
///
/// # Safety
/// `plan` must be null or a handle from [`ls_plan_new`].
#[no_mangle]
pub unsafe extern "C" fn ls_plan_chunk(plan: *const LsPlan, step: u64) -> u64 {
    plan.as_ref().map_or(0, |p| p.0.chunk(step))
}

/// # Safety
/// `plan` must be null or a handle from [`ls_plan_new`] not freed before.
#[no_mangle]
pub unsafe extern "C" fn ls_plan_free(plan: *mut LsPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Chunk size at `step` without materialising the plan.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_chunk_at_step(
    technique: LsTechnique,
    total: u64,
    workers: u64,
    step: u64,
    out: *mut u64,
) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = loopsched::chunk_at_step(technique.into(), total, workers, step).map_err(fail)?;
        Ok(())
    })
}

/// Loads a platform file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_platform_load(path: *const c_char, out: *mut *mut LsPlatform) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = sim::load_platform(path_arg(path)?).map_err(fail)?;
        *out = Box::into_raw(Box::new(LsPlatform(spec)));
        Ok(())
    })
}

/// Platform from explicit values: FLOP/s, bit/s and seconds.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_platform_new(
    hosts: u64,
    speed_flops: f64,
    bandwidth_bps: f64,
    latency_s: f64,
    out: *mut *mut LsPlatform,
) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = PlatformSpec::new(hosts, speed_flops, bandwidth_bps, latency_s).map_err(fail)?;
        *out = Box::into_raw(Box::new(LsPlatform(spec)));
        Ok(())
    })
}

/// # Safety
/// `platform` must be null or a live platform handle.
#[no_mangle]
pub unsafe extern "C" fn ls_platform_free(platform: *mut LsPlatform) {
    if !platform.is_null() {
        drop(Box::from_raw(platform));
    }
}

/// Simulates one loop with the analytic cost model and constant RP3
/// overheads. `g1`/`g2` scale the two kernels' iteration costs.
///
/// # Safety
/// `platform` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_simulate(
    platform: *const LsPlatform,
    kernel: LsKernel,
    matrix_order: u64,
    technique: LsTechnique,
    threads: u64,
    g1: f64,
    g2: f64,
    shared_memory: bool,
    out: *mut *mut LsSimResult,
) -> LsStatus {
    guard(|| {
        let Some(platform) = platform.as_ref() else {
            return Err(null("platform"));
        };
        if out.is_null() {
            return Err(null("out"));
        }
        let model = KernelCostModel::new(kernel.into(), matrix_order, g1, g2).map_err(fail)?;
        let job = SimJob::from_model(technique.into(), model, threads);
        let options = SimOptions {
            comm_mode: if shared_memory { CommMode::SharedMemory } else { CommMode::Networked },
            ..Default::default()
        };
        let r = sim::simulate(&job, &platform.0, &OverheadModel::rp3(), options).map_err(fail)?;
        *out = Box::into_raw(Box::new(LsSimResult(r)));
        Ok(())
    })
}

/// Makespan in seconds, or NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn ls_sim_result_makespan(result: *const LsSimResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.makespan())
}

/// Makespan in integer picoseconds, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn ls_sim_result_makespan_ps(result: *const LsSimResult) -> u64 {
    result.as_ref().map_or(0, |r| r.0.makespan_ps)
}

/// Makespan times thread count, or NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn ls_sim_result_parallel_cost(result: *const LsSimResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.0.parallel_cost())
}

/// # Safety
/// `result` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn ls_sim_result_chunk_count(result: *const LsSimResult) -> u64 {
    result.as_ref().map_or(0, |r| r.0.chunk_log.len() as u64)
}

/// # Safety
/// `result` must be null or a live result handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn ls_sim_result_free(result: *mut LsSimResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Runs a kernel natively on `threads` threads over random inputs from
/// `seed`. With `validate`, the output is checked against a serial run.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_run_native(
    kernel: LsKernel,
    matrix_order: u64,
    technique: LsTechnique,
    threads: u64,
    seed: u64,
    validate: bool,
    out: *mut LsNativeStats,
) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let order = usize::try_from(matrix_order).map_err(|_| fail(Error::InvalidArgument("matrix order too large".into())))?;
        let threads = usize::try_from(threads).map_err(|_| fail(Error::InvalidArgument("too many threads".into())))?;
        let problem = KernelProblem::random(kernel.into(), order, seed).map_err(fail)?;
        let mut config = NativeRunConfig::new(&problem, technique.into(), threads);
        config.validate = validate;
        let r = run_parallel(&config).map_err(fail)?;
        *out = LsNativeStats {
            wall_time_s: r.wall_time,
            parallel_cost: r.parallel_cost(),
            chunks: r.chunk_log.len() as u64,
            max_relative_error: r.max_relative_error.unwrap_or(-1.0),
        };
        Ok(())
    })
}

/// `(1 - simulated / reference) * 100`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ls_percent_error(simulated: f64, reference: f64, out: *mut f64) -> LsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = loopsched::harness::percent_error(simulated, reference).map_err(fail)?;
        Ok(())
    })
}
