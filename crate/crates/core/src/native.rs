//! Native decentralized self-scheduling.
//!
//! All threads, the calling thread included, repeatedly claim work from two
//! shared counters and run the kernel on what they claimed. There is no
//! master thread and no lock.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::kernels::{max_relative_difference, KernelProblem, SharedOutput};
use crate::sched::{build_chunk_plan, ChunkPlan, SchedulingTechnique};

/// Relative tolerance for comparing parallel output with the serial run.
pub const VALIDATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Claim {
    pub step: u64,
    pub start: u64,
    pub size: u64,
}

/// Shared scheduling state: the next step and the next unclaimed iteration.
#[derive(Debug)]
pub struct WorkState<'a> {
    scheduling_step: AtomicU64,
    current_index: AtomicU64,
    num_tasks: u64,
    plan: &'a ChunkPlan,
}

impl<'a> WorkState<'a> {
    pub fn new(plan: &'a ChunkPlan) -> Self {
        WorkState {
            scheduling_step: AtomicU64::new(0),
            current_index: AtomicU64::new(0),
            num_tasks: plan.total_iterations(),
            plan,
        }
    }

    pub fn num_tasks(&self) -> u64 {
        self.num_tasks
    }

    pub fn current_index(&self) -> u64 {
        self.current_index.load(Ordering::SeqCst)
    }

    pub fn scheduling_step(&self) -> u64 {
        self.scheduling_step.load(Ordering::SeqCst)
    }

    /// Claims the next chunk, or `None` once the loop is exhausted.
    ///
    /// Exactly two atomic read-modify-writes, no retries. Counters are
    /// never rolled back, so late claims see `start >= N` and give up. A
    /// step past the end of the plan has size 0; everything left belongs
    /// to claims already in flight, so it also gives up.
    pub fn obtain_work(&self) -> Option<Claim> {
        let step = self.scheduling_step.fetch_add(1, Ordering::SeqCst);
        let mut size = self.plan.chunk(step);
        let start = self.current_index.fetch_add(size, Ordering::SeqCst);
        if start >= self.num_tasks || size == 0 {
            return None;
        }
        if start + size >= self.num_tasks {
            size = self.num_tasks - start;
        }
        Some(Claim { step, start, size })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pinning {
    #[default]
    None,
    /// Spread threads over physical cores first, then hyperthreads.
    Scatter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TimingCapture {
    #[default]
    Off,
    /// Time each `execute_chunk`.
    PerChunk,
    /// Also time every `obtain_work` call.
    Calibration,
}

#[derive(Debug, Clone)]
pub struct NativeRunConfig<'a> {
    pub kernel: &'a KernelProblem,
    pub technique: SchedulingTechnique,
    pub num_threads: usize,
    pub pinning: Pinning,
    pub timing: TimingCapture,
    pub validate: bool,
}

impl<'a> NativeRunConfig<'a> {
    pub fn new(kernel: &'a KernelProblem, technique: SchedulingTechnique, num_threads: usize) -> Self {
        NativeRunConfig {
            kernel,
            technique,
            num_threads,
            pinning: Pinning::None,
            timing: TimingCapture::Off,
            validate: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NativeChunkRecord {
    pub step: u64,
    pub thread: usize,
    pub start: u64,
    pub size: u64,
    /// Nanoseconds spent in `execute_chunk`, when captured.
    pub execute_ns: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct NativeRunResult {
    /// Seconds from thread creation to join.
    pub wall_time: f64,
    pub num_threads: usize,
    /// Claims sorted by step.
    pub chunk_log: Vec<NativeChunkRecord>,
    /// Nanoseconds per `obtain_work` call, including the final empty ones.
    pub overhead_samples_ns: Vec<u64>,
    pub output: Vec<f64>,
    /// Largest relative deviation from the serial reference, if validated.
    pub max_relative_error: Option<f64>,
}

impl NativeRunResult {
    /// Wall time times thread count.
    pub fn parallel_cost(&self) -> f64 {
        self.wall_time * self.num_threads as f64
    }

    /// Checks that the logged ranges cover `[0, n)` exactly once.
    pub fn verify_partition(&self, n: u64) -> Result<()> {
        let mut ranges: Vec<(u64, u64)> = self.chunk_log.iter().map(|r| (r.start, r.size)).collect();
        ranges.sort_unstable();
        let mut next = 0;
        for (start, size) in ranges {
            if start != next {
                return Err(Error::Validation(format!(
                    "chunk log {} at {start}, expected {next}",
                    if start < next { "overlaps" } else { "leaves a gap" }
                )));
            }
            next = start + size;
        }
        if next != n {
            return Err(Error::Validation(format!("chunk log covers [0, {next}) instead of [0, {n})")));
        }
        Ok(())
    }
}

#[derive(Default)]
struct ThreadLog {
    chunks: Vec<NativeChunkRecord>,
    overhead_ns: Vec<u64>,
}

fn worker(thread_id: usize, state: &WorkState<'_>, kernel: &KernelProblem, out: &SharedOutput, timing: TimingCapture) -> ThreadLog {
    let mut log = ThreadLog::default();
    loop {
        let before = (timing == TimingCapture::Calibration).then(Instant::now);
        let claim = state.obtain_work();
        if let Some(t) = before {
            log.overhead_ns.push(t.elapsed().as_nanos() as u64);
        }
        let Some(claim) = claim else { break };
        let before = (timing != TimingCapture::Off).then(Instant::now);
        kernel
            .execute_chunk(claim.start, claim.size, out)
            .expect("claimed ranges lie inside the iteration space");
        let execute_ns = before.map(|t| t.elapsed().as_nanos() as u64);
        log.chunks.push(NativeChunkRecord {
            step: claim.step,
            thread: thread_id,
            start: claim.start,
            size: claim.size,
            execute_ns,
        });
    }
    log
}

/// Runs the kernel on `num_threads` threads and measures the parallel region.
pub fn run_parallel(config: &NativeRunConfig<'_>) -> Result<NativeRunResult> {
    let threads = config.num_threads;
    if threads == 0 {
        return Err(Error::invalid("thread count must be at least 1"));
    }
    let available = thread::available_parallelism().map_or(1, |n| n.get());
    if threads > available {
        log::warn!("{threads} threads requested but only {available} cores are available");
    }
    let kernel = config.kernel;
    let plan = build_chunk_plan(config.technique, kernel.total_iterations(), threads as u64)?;
    let state = WorkState::new(&plan);
    let out = kernel.new_output();
    let cpus = match config.pinning {
        Pinning::Scatter => affinity::scatter_order(),
        Pinning::None => None,
    };
    let pin = |tid: usize| {
        if let Some(cpus) = &cpus {
            affinity::pin_current_thread(cpus[tid % cpus.len()]);
        }
    };

    let started = Instant::now();
    let (logs, spawn_error) = thread::scope(|scope| {
        let mut handles = Vec::with_capacity(threads - 1);
        let mut spawn_error = None;
        for tid in 1..threads {
            let (state, out, pin) = (&state, &out, &pin);
            let spawned = thread::Builder::new()
                .name(format!("loopsched-{tid}"))
                .spawn_scoped(scope, move || {
                    pin(tid);
                    worker(tid, state, kernel, out, config.timing)
                });
            match spawned {
                Ok(h) => handles.push(h),
                Err(e) => {
                    spawn_error = Some(e);
                    break;
                }
            }
        }
        pin(0);
        let mut logs = vec![worker(0, &state, kernel, &out, config.timing)];
        for h in handles {
            logs.push(h.join().expect("worker thread panicked"));
        }
        (logs, spawn_error)
    });
    let wall_time = started.elapsed().as_secs_f64();
    if let Some(e) = spawn_error {
        return Err(Error::Runtime(format!("failed to spawn worker thread: {e}")));
    }

    let mut chunk_log = Vec::new();
    let mut overhead_samples_ns = Vec::new();
    for log in logs {
        chunk_log.extend(log.chunks);
        overhead_samples_ns.extend(log.overhead_ns);
    }
    chunk_log.sort_by_key(|r| r.step);

    let output = out.to_vec();
    let max_relative_error = if config.validate {
        let err = max_relative_difference(&output, &kernel.serial_reference());
        if err.is_nan() || err > VALIDATION_TOLERANCE {
            return Err(Error::Validation(format!(
                "parallel output deviates from the serial reference by {err:e} (tolerance {VALIDATION_TOLERANCE:e})"
            )));
        }
        Some(err)
    } else {
        None
    };

    Ok(NativeRunResult {
        wall_time,
        num_threads: threads,
        chunk_log,
        overhead_samples_ns,
        output,
        max_relative_error,
    })
}

pub mod affinity {
    //! Best-effort thread pinning.

    /// Logical CPUs ordered so consecutive threads land on different
    /// physical cores (round-robin over sockets), hyperthread siblings last.
    #[cfg(target_os = "linux")]
    pub fn scatter_order() -> Option<Vec<usize>> {
        use std::collections::BTreeMap;

        let allowed = allowed_cpus()?;
        let read = |cpu: usize, what: &str| -> Option<usize> {
            std::fs::read_to_string(format!("/sys/devices/system/cpu/cpu{cpu}/topology/{what}"))
                .ok()?
                .trim()
                .parse()
                .ok()
        };
        // (package, core) -> logical cpus
        let mut cores: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for &cpu in &allowed {
            let package = read(cpu, "physical_package_id").unwrap_or(0);
            let core = read(cpu, "core_id").unwrap_or(cpu);
            cores.entry((package, core)).or_default().push(cpu);
        }
        // (sibling rank, core rank within package, package)
        let mut ranked = Vec::new();
        let mut per_package: BTreeMap<usize, usize> = BTreeMap::new();
        for ((package, _), cpus) in &cores {
            let rank = per_package.entry(*package).or_default();
            for (sibling, &cpu) in cpus.iter().enumerate() {
                ranked.push(((sibling, *rank, *package), cpu));
            }
            *rank += 1;
        }
        ranked.sort_unstable();
        Some(ranked.into_iter().map(|(_, cpu)| cpu).collect())
    }

    #[cfg(target_os = "linux")]
    fn allowed_cpus() -> Option<Vec<usize>> {
        // SAFETY: cpu_set_t is plain data; zeroed is a valid empty set and
        // sched_getaffinity writes at most size_of::<cpu_set_t>() bytes.
        unsafe {
            let mut set: libc::cpu_set_t = std::mem::zeroed();
            if libc::sched_getaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &mut set) != 0 {
                log::warn!("sched_getaffinity failed: {}", std::io::Error::last_os_error());
                return None;
            }
            let cpus: Vec<usize> = (0..libc::CPU_SETSIZE as usize).filter(|&c| libc::CPU_ISSET(c, &set)).collect();
            (!cpus.is_empty()).then_some(cpus)
        }
    }

    #[cfg(target_os = "linux")]
    pub fn pin_current_thread(cpu: usize) {
        // SAFETY: see allowed_cpus; pid 0 is the calling thread.
        let ret = unsafe {
            let mut set: libc::cpu_set_t = std::mem::zeroed();
            libc::CPU_ZERO(&mut set);
            libc::CPU_SET(cpu, &mut set);
            libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set)
        };
        if ret != 0 {
            log::warn!("could not pin thread to cpu {cpu}: {}; running unpinned", std::io::Error::last_os_error());
        }
    }

    #[cfg(not(target_os = "linux"))]
    pub fn scatter_order() -> Option<Vec<usize>> {
        log::warn!("thread pinning is not supported on this platform; running unpinned");
        None
    }

    #[cfg(not(target_os = "linux"))]
    pub fn pin_current_thread(_cpu: usize) {}
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelKind;
    use SchedulingTechnique::*;

    fn claims(plan: &ChunkPlan, calls: usize) -> Vec<Option<(u64, u64)>> {
        let state = WorkState::new(plan);
        (0..calls).map(|_| state.obtain_work().map(|c| (c.start, c.size))).collect()
    }

    #[test]
    fn sequential_replay() {
        let plan = build_chunk_plan(Static, 10, 4).unwrap();
        assert_eq!(plan.chunk_sizes(), &[3, 3, 3, 1]);
        assert_eq!(
            claims(&plan, 5),
            vec![Some((0, 3)), Some((3, 3)), Some((6, 3)), Some((9, 1)), None]
        );
    }

    #[test]
    fn truncates_at_the_end() {
        let plan = build_chunk_plan(Static, 10, 4).unwrap();
        let state = WorkState::new(&plan);
        state.current_index.store(9, Ordering::SeqCst);
        assert_eq!(state.obtain_work(), Some(Claim { step: 0, start: 9, size: 1 }));
    }

    #[test]
    fn start_at_n_is_empty() {
        let plan = build_chunk_plan(SelfScheduling, 10, 4).unwrap();
        let state = WorkState::new(&plan);
        state.current_index.store(10, Ordering::SeqCst);
        assert_eq!(state.obtain_work(), None);
        // Counters only move forward.
        assert_eq!(state.scheduling_step(), 1);
        assert_eq!(state.current_index(), 11);
    }

    #[test]
    fn single_thread_replays_plan() {
        let kernel = KernelProblem::random(KernelKind::AdjointConvolution, 7, 3).unwrap();
        for t in SchedulingTechnique::ALL {
            let r = run_parallel(&NativeRunConfig::new(&kernel, t, 1)).unwrap();
            let plan = build_chunk_plan(t, 49, 1).unwrap();
            let got: Vec<_> = r.chunk_log.iter().map(|c| (c.step, c.start, c.size)).collect();
            let want: Vec<_> = plan.ranges().collect();
            assert_eq!(got, want, "{t}");
        }
    }

    #[test]
    fn stress_many_threads() {
        let kernel = KernelProblem::random(KernelKind::MatMul, 12, 9).unwrap();
        let reference = kernel.serial_reference();
        for rep in 0..1000 {
            let t = SchedulingTechnique::ALL[rep % 4];
            let mut config = NativeRunConfig::new(&kernel, t, 56);
            config.timing = TimingCapture::Calibration;
            let r = run_parallel(&config).unwrap();
            r.verify_partition(144).unwrap();
            assert_eq!(r.output, reference);
            // at most one empty claim per thread on top of the plan
            assert!(r.overhead_samples_ns.len() <= r.chunk_log.len() + 56);
            assert_eq!(r.parallel_cost(), r.wall_time * 56.0);
        }
    }

    #[test]
    fn validation_and_timing() {
        let kernel = KernelProblem::random(KernelKind::MatMul, 16, 1).unwrap();
        let mut config = NativeRunConfig::new(&kernel, Guided, 3);
        config.validate = true;
        config.timing = TimingCapture::PerChunk;
        config.pinning = Pinning::Scatter;
        let r = run_parallel(&config).unwrap();
        assert!(r.max_relative_error.unwrap() <= VALIDATION_TOLERANCE);
        assert!(r.chunk_log.iter().all(|c| c.execute_ns.is_some()));
        assert!(r.overhead_samples_ns.is_empty());
    }

    #[test]
    fn zero_threads_rejected() {
        let kernel = KernelProblem::random(KernelKind::MatMul, 2, 1).unwrap();
        assert!(run_parallel(&NativeRunConfig::new(&kernel, Static, 0)).is_err());
    }

    #[test]
    fn partition_check_detects_gaps() {
        let rec = |start, size| NativeChunkRecord {
            step: 0,
            thread: 0,
            start,
            size,
            execute_ns: None,
        };
        let mut r = NativeRunResult {
            wall_time: 0.0,
            num_threads: 1,
            chunk_log: vec![rec(0, 2), rec(3, 1)],
            overhead_samples_ns: vec![],
            output: vec![],
            max_relative_error: None,
        };
        assert!(r.verify_partition(4).is_err());
        r.chunk_log = vec![rec(0, 3), rec(2, 2)];
        assert!(r.verify_partition(4).is_err());
        r.chunk_log = vec![rec(2, 2), rec(0, 2)];
        r.verify_partition(4).unwrap();
    }

    #[cfg(target_os = "linux")]
    #[test]
    fn scatter_order_lists_allowed_cpus() {
        let order = affinity::scatter_order().unwrap();
        assert!(!order.is_empty());
        let mut sorted = order.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), order.len());
    }
}
