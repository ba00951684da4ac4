//! Machine calibration for simulator predictions.
//!
//! Three costs are measured on the host: creating and joining the worker
//! threads, one `obtain_work` call per technique, and the execution time of
//! every loop iteration. Times are converted to FLOP by multiplying with the
//! nominal speed of one core, so a simulated platform running at that speed
//! reproduces the measured seconds.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::thread;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelProblem};
use crate::native::{run_parallel, NativeRunConfig, Pinning, TimingCapture};
use crate::sched::SchedulingTechnique;

pub const SCHEMA_VERSION: &str = "v1";
pub const DEFAULT_BUCKETS: usize = 64;
pub const MIN_SAMPLES_PER_BUCKET: u64 = 32;

/// `seconds * nominal_speed`.
pub fn seconds_to_flop(seconds: f64, nominal_speed: f64) -> f64 {
    seconds * nominal_speed
}

/// A measured cost in both units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cost {
    pub seconds: f64,
    pub flop: f64,
}

impl Cost {
    pub fn from_seconds(seconds: f64, nominal_speed: f64) -> Self {
        Cost {
            seconds,
            flop: seconds_to_flop(seconds, nominal_speed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskBucket {
    /// First iteration id in the bucket.
    pub start: u64,
    /// One past the last iteration id.
    pub end: u64,
    /// Median per-iteration cost.
    pub cost: Cost,
    pub samples: u64,
}

impl TaskBucket {
    fn center(&self) -> f64 {
        (self.start + self.end - 1) as f64 / 2.0
    }
}

/// Per-iteration costs of one kernel, bucketed over the iteration space.
///
/// Values are interpolated linearly between bucket centres and held flat
/// beyond the first and last centre. One iteration per bucket gives an
/// exact table.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskTable {
    kind: KernelKind,
    matrix_order: u64,
    buckets: Vec<TaskBucket>,
}

impl TaskTable {
    pub fn new(kind: KernelKind, matrix_order: u64, buckets: Vec<TaskBucket>) -> Result<Self> {
        let total = matrix_order * matrix_order;
        let mut next = 0;
        for b in &buckets {
            if b.start != next || b.end <= b.start {
                return Err(Error::invalid(format!(
                    "task buckets must be contiguous and non-empty (bucket [{}, {}) after {next})",
                    b.start, b.end
                )));
            }
            if !(b.cost.seconds >= 0.0 && b.cost.flop >= 0.0) {
                return Err(Error::invalid("task costs must be non-negative"));
            }
            next = b.end;
        }
        if next != total {
            return Err(Error::invalid(format!(
                "task buckets cover [0, {next}) but the kernel has {total} iterations"
            )));
        }
        Ok(TaskTable {
            kind,
            matrix_order,
            buckets,
        })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn matrix_order(&self) -> u64 {
        self.matrix_order
    }

    pub fn iterations(&self) -> u64 {
        self.matrix_order * self.matrix_order
    }

    pub fn buckets(&self) -> &[TaskBucket] {
        &self.buckets
    }

    fn interpolate(&self, id: u64, value: impl Fn(&TaskBucket) -> f64) -> f64 {
        let x = id as f64;
        // First bucket whose centre lies at or beyond id.
        let i = self.buckets.partition_point(|b| b.center() < x);
        if i == 0 {
            return value(&self.buckets[0]);
        }
        if i == self.buckets.len() {
            return value(&self.buckets[i - 1]);
        }
        let (lo, hi) = (&self.buckets[i - 1], &self.buckets[i]);
        let w = (x - lo.center()) / (hi.center() - lo.center());
        value(lo) + (value(hi) - value(lo)) * w
    }

    pub fn flop_at(&self, id: u64) -> f64 {
        self.interpolate(id, |b| b.cost.flop)
    }

    pub fn seconds_at(&self, id: u64) -> f64 {
        self.interpolate(id, |b| b.cost.seconds)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationProfile {
    nominal_core_speed: f64,
    timer_overhead_s: f64,
    partial: bool,
    thread_creation: BTreeMap<u64, Cost>,
    overhead: [Cost; 4],
    tasks: BTreeMap<KernelKind, TaskTable>,
}

impl CalibrationProfile {
    pub fn new(
        nominal_core_speed: f64,
        thread_creation: BTreeMap<u64, Cost>,
        overhead: [Cost; 4],
        tasks: Vec<TaskTable>,
    ) -> Result<Self> {
        if !(nominal_core_speed > 0.0 && nominal_core_speed.is_finite()) {
            return Err(Error::invalid("nominal core speed must be positive"));
        }
        let costs = thread_creation.values().chain(overhead.iter());
        if costs.into_iter().any(|c| !(c.seconds >= 0.0 && c.flop >= 0.0)) {
            return Err(Error::invalid("calibrated costs must be non-negative"));
        }
        Ok(CalibrationProfile {
            nominal_core_speed,
            timer_overhead_s: 0.0,
            partial: false,
            thread_creation,
            overhead,
            tasks: tasks.into_iter().map(|t| (t.kind, t)).collect(),
        })
    }

    pub fn nominal_core_speed(&self) -> f64 {
        self.nominal_core_speed
    }

    pub fn timer_overhead_s(&self) -> f64 {
        self.timer_overhead_s
    }

    pub fn is_partial(&self) -> bool {
        self.partial
    }

    pub fn thread_creation(&self) -> &BTreeMap<u64, Cost> {
        &self.thread_creation
    }

    pub fn overhead(&self, technique: SchedulingTechnique) -> Cost {
        self.overhead[technique.index()]
    }

    pub fn tasks(&self, kind: KernelKind) -> Option<&TaskTable> {
        self.tasks.get(&kind)
    }

    pub fn with_metadata(mut self, timer_overhead_s: f64, partial: bool) -> Self {
        self.timer_overhead_s = timer_overhead_s;
        self.partial = partial;
        self
    }

    /// Serialises to the sectioned profile format.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        s.push_str("# loopsched calibration profile, schema v1\n");
        s.push_str("# [meta] key = value; other sections: CSV header line then rows\n");
        s.push_str("# seconds are raw measurements, flop = seconds * nominal_core_speed\n\n");
        s.push_str("[meta]\n");
        let _ = writeln!(s, "version = {SCHEMA_VERSION}");
        let _ = writeln!(s, "nominal_core_speed = {}", self.nominal_core_speed);
        let _ = writeln!(s, "timer_overhead_s = {}", self.timer_overhead_s);
        let _ = writeln!(s, "partial = {}", self.partial);
        s.push_str("\n[thread_creation]\nthreads,seconds,flop\n");
        for (p, c) in &self.thread_creation {
            let _ = writeln!(s, "{p},{},{}", c.seconds, c.flop);
        }
        s.push_str("\n[overhead]\ntechnique,seconds,flop\n");
        for t in SchedulingTechnique::ALL {
            let c = self.overhead(t);
            let _ = writeln!(s, "{t},{},{}", c.seconds, c.flop);
        }
        for table in self.tasks.values() {
            let _ = writeln!(s, "\n[tasks:{}]", table.kind);
            let _ = writeln!(s, "matrix_order = {}", table.matrix_order);
            s.push_str("start,end,seconds,flop,samples\n");
            for b in &table.buckets {
                let _ = writeln!(s, "{},{},{},{},{}", b.start, b.end, b.cost.seconds, b.cost.flop, b.samples);
            }
        }
        s
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        ProfileParser::new(path).parse(text)
    }
}

pub fn write_profile(profile: &CalibrationProfile, path: &Path) -> Result<()> {
    std::fs::write(path, profile.to_file_string()).map_err(|e| Error::io(path, e))
}

pub fn read_profile(path: &Path) -> Result<CalibrationProfile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CalibrationProfile::parse(path, &text)
}

#[derive(PartialEq)]
enum Section {
    None,
    Meta,
    ThreadCreation,
    Overhead,
    Tasks(KernelKind),
}

struct ProfileParser<'p> {
    path: &'p Path,
    line: usize,
}

impl<'p> ProfileParser<'p> {
    fn new(path: &'p Path) -> Self {
        ProfileParser { path, line: 0 }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.path, self.line, msg)
    }

    fn num<T: std::str::FromStr>(&self, field: &str, what: &str) -> Result<T> {
        field
            .trim()
            .parse()
            .map_err(|_| self.err(format!("invalid {what} '{}'", field.trim())))
    }

    fn fields<'a>(&self, row: &'a str, n: usize) -> Result<Vec<&'a str>> {
        let f: Vec<&str> = row.split(',').map(str::trim).collect();
        if f.len() != n {
            return Err(self.err(format!("expected {n} comma-separated fields, got {}", f.len())));
        }
        Ok(f)
    }

    fn parse(mut self, text: &str) -> Result<CalibrationProfile> {
        let mut section = Section::None;
        let mut header_seen = false;
        let mut meta: BTreeMap<String, String> = BTreeMap::new();
        let mut thread_creation = BTreeMap::new();
        let mut overhead: [Option<Cost>; 4] = [None; 4];
        let mut tasks: BTreeMap<KernelKind, (Option<u64>, Vec<TaskBucket>, usize)> = BTreeMap::new();

        for (idx, raw) in text.lines().enumerate() {
            self.line = idx + 1;
            let line = crate::keyvalue::strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name.trim() {
                    "meta" => Section::Meta,
                    "thread_creation" => Section::ThreadCreation,
                    "overhead" => Section::Overhead,
                    other => match other.strip_prefix("tasks:") {
                        Some(k) => {
                            let kind: KernelKind = k.parse().map_err(|_| self.err(format!("unknown kernel '{k}'")))?;
                            if tasks.insert(kind, (None, Vec::new(), self.line)).is_some() {
                                return Err(self.err(format!("duplicate section [tasks:{kind}]")));
                            }
                            Section::Tasks(kind)
                        }
                        None => return Err(self.err(format!("unknown section [{other}]"))),
                    },
                };
                header_seen = false;
                continue;
            }
            match &section {
                Section::None => return Err(self.err("content before the first section")),
                Section::Meta => {
                    let (k, v) = line.split_once('=').ok_or_else(|| self.err("expected 'key = value'"))?;
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                Section::Tasks(kind) if line.contains('=') => {
                    let (k, v) = line.split_once('=').expect("checked");
                    if k.trim() != "matrix_order" {
                        return Err(self.err(format!("unknown task key '{}'", k.trim())));
                    }
                    let order = self.num(v, "matrix_order")?;
                    tasks.get_mut(kind).expect("section registered").0 = Some(order);
                }
                _ if !header_seen => {
                    let expected = match section {
                        Section::ThreadCreation => "threads,seconds,flop",
                        Section::Overhead => "technique,seconds,flop",
                        _ => "start,end,seconds,flop,samples",
                    };
                    let got: String = line.chars().filter(|c| !c.is_whitespace()).collect();
                    if got != expected {
                        return Err(self.err(format!("expected header '{expected}', got '{line}'")));
                    }
                    header_seen = true;
                }
                Section::ThreadCreation => {
                    let f = self.fields(line, 3)?;
                    let threads: u64 = self.num(f[0], "thread count")?;
                    let cost = Cost {
                        seconds: self.num(f[1], "seconds")?,
                        flop: self.num(f[2], "flop")?,
                    };
                    if thread_creation.insert(threads, cost).is_some() {
                        return Err(self.err(format!("duplicate thread count {threads}")));
                    }
                }
                Section::Overhead => {
                    let f = self.fields(line, 3)?;
                    let t: SchedulingTechnique = f[0].parse().map_err(|e: Error| self.err(e.to_string()))?;
                    let cost = Cost {
                        seconds: self.num(f[1], "seconds")?,
                        flop: self.num(f[2], "flop")?,
                    };
                    if overhead[t.index()].replace(cost).is_some() {
                        return Err(self.err(format!("duplicate overhead row for {t}")));
                    }
                }
                Section::Tasks(kind) => {
                    let f = self.fields(line, 5)?;
                    let bucket = TaskBucket {
                        start: self.num(f[0], "start")?,
                        end: self.num(f[1], "end")?,
                        cost: Cost {
                            seconds: self.num(f[2], "seconds")?,
                            flop: self.num(f[3], "flop")?,
                        },
                        samples: self.num(f[4], "samples")?,
                    };
                    tasks.get_mut(kind).expect("section registered").1.push(bucket);
                }
            }
        }

        self.line = 0;
        match meta.get("version").map(String::as_str) {
            Some(SCHEMA_VERSION) => {}
            Some(v) => return Err(self.err(format!("unsupported profile version '{v}'"))),
            None => return Err(self.err("missing [meta] version")),
        }
        let speed: f64 = self.num(
            meta.get("nominal_core_speed").ok_or_else(|| self.err("missing nominal_core_speed"))?,
            "nominal_core_speed",
        )?;
        let timer: f64 = match meta.get("timer_overhead_s") {
            Some(v) => self.num(v, "timer_overhead_s")?,
            None => 0.0,
        };
        let partial: bool = match meta.get("partial") {
            Some(v) => self.num(v, "partial")?,
            None => false,
        };
        let mut costs = [Cost { seconds: 0.0, flop: 0.0 }; 4];
        for t in SchedulingTechnique::ALL {
            costs[t.index()] = overhead[t.index()].ok_or_else(|| self.err(format!("[overhead] has no row for {t}")))?;
        }
        let mut tables = Vec::new();
        for (kind, (order, buckets, line)) in tasks {
            self.line = line;
            let order = order.ok_or_else(|| self.err(format!("[tasks:{kind}] is missing matrix_order")))?;
            tables.push(TaskTable::new(kind, order, buckets).map_err(|e| self.err(e.to_string()))?);
        }
        self.line = 0;
        Ok(CalibrationProfile::new(speed, thread_creation, costs, tables)
            .map_err(|e| self.err(e.to_string()))?
            .with_metadata(timer, partial))
    }
}

/// What to measure.
#[derive(Debug, Clone)]
pub struct CalibrationPlan {
    pub kernels: Vec<(KernelKind, usize)>,
    pub techniques: Vec<SchedulingTechnique>,
    pub thread_counts: Vec<usize>,
    pub reps: usize,
    pub nominal_core_speed: f64,
    pub buckets: usize,
    pub pinning: Pinning,
    pub seed: u64,
}

fn median(samples: &mut [f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.sort_unstable_by(f64::total_cmp);
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        (samples[mid - 1] + samples[mid]) / 2.0
    }
}

/// Median cost of reading the monotonic clock twice.
pub fn measure_timer_overhead() -> f64 {
    let mut samples: Vec<f64> = (0..1001)
        .map(|_| {
            let t = Instant::now();
            t.elapsed().as_secs_f64()
        })
        .collect();
    median(&mut samples)
}

/// Removes the timer cost from sub-microsecond samples where it exceeds 5%.
pub fn correct_for_timer(sample_s: f64, timer_s: f64) -> f64 {
    if sample_s < 1e-6 && timer_s > 0.05 * sample_s {
        (sample_s - timer_s).max(0.0)
    } else {
        sample_s
    }
}

/// Median spawn-plus-join time of an empty parallel region.
pub fn measure_thread_creation(threads: usize, reps: usize) -> Result<f64> {
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let started = Instant::now();
        let spawned = thread::scope(|s| {
            let handles = (1..threads)
                .map(|_| thread::Builder::new().spawn_scoped(s, || {}))
                .collect::<std::io::Result<Vec<_>>>()?;
            for h in handles {
                let _ = h.join();
            }
            Ok::<_, std::io::Error>(())
        });
        spawned.map_err(|e| Error::Runtime(format!("failed to spawn thread: {e}")))?;
        samples.push(started.elapsed().as_secs_f64());
    }
    Ok(median(&mut samples))
}

/// Bucketed medians of per-iteration samples `(iteration id, seconds)`.
pub fn bucket_task_times(kind: KernelKind, matrix_order: u64, samples: &[(u64, f64)], buckets: usize, nominal_speed: f64) -> Result<TaskTable> {
    let total = matrix_order * matrix_order;
    let count = (buckets as u64).clamp(1, total.max(1));
    let mut per_bucket: Vec<Vec<f64>> = vec![Vec::new(); count as usize];
    // Equal-width buckets: bucket b covers [b*total/count, (b+1)*total/count).
    let bucket_of = |id: u64| ((id as u128 * count as u128) / total as u128) as usize;
    for &(id, s) in samples {
        if id < total {
            per_bucket[bucket_of(id)].push(s);
        }
    }
    let bounds = |b: u64| ((b as u128 * total as u128).div_ceil(count as u128)) as u64;
    let table = per_bucket
        .iter_mut()
        .enumerate()
        .map(|(b, s)| TaskBucket {
            start: bounds(b as u64),
            end: bounds(b as u64 + 1),
            samples: s.len() as u64,
            cost: Cost::from_seconds(median(s), nominal_speed),
        })
        .collect();
    TaskTable::new(kind, matrix_order, table)
}

/// Runs the calibration experiments.
pub fn calibrate(plan: &CalibrationPlan) -> Result<CalibrationProfile> {
    if plan.kernels.is_empty() || plan.thread_counts.is_empty() || plan.reps == 0 {
        return Err(Error::invalid("calibration needs kernels, thread counts and at least one repetition"));
    }
    let speed = plan.nominal_core_speed;
    let mut partial = false;
    let timer = measure_timer_overhead();
    log::info!("timer overhead {timer:e} s");

    let mut thread_creation = BTreeMap::new();
    for &p in &plan.thread_counts {
        let s = measure_thread_creation(p, plan.reps)?;
        thread_creation.insert(p as u64, Cost::from_seconds(correct_for_timer(s, timer), speed));
    }

    let problems: Vec<KernelProblem> = plan
        .kernels
        .iter()
        .map(|&(kind, n)| KernelProblem::random(kind, n, plan.seed))
        .collect::<Result<_>>()?;

    let mut overhead = [Cost { seconds: 0.0, flop: 0.0 }; 4];
    for &technique in &plan.techniques {
        let mut samples = Vec::new();
        for problem in &problems {
            for &p in &plan.thread_counts {
                for _ in 0..plan.reps {
                    let mut config = NativeRunConfig::new(problem, technique, p);
                    config.timing = TimingCapture::Calibration;
                    config.pinning = plan.pinning;
                    let r = run_parallel(&config)?;
                    samples.extend(r.overhead_samples_ns.iter().map(|&ns| correct_for_timer(ns as f64 * 1e-9, timer)));
                }
            }
        }
        if samples.len() < plan.reps {
            partial = true;
        }
        overhead[technique.index()] = Cost::from_seconds(median(&mut samples), speed);
        log::info!("{technique}: scheduling overhead {:e} s", overhead[technique.index()].seconds);
    }

    let mut tables = Vec::new();
    for problem in &problems {
        let mut samples = Vec::new();
        for _ in 0..plan.reps {
            let mut config = NativeRunConfig::new(problem, SchedulingTechnique::SelfScheduling, 1);
            config.timing = TimingCapture::PerChunk;
            let r = run_parallel(&config)?;
            for c in &r.chunk_log {
                let per_iteration = c.execute_ns.unwrap_or(0) as f64 * 1e-9 / c.size as f64;
                samples.push((c.start, correct_for_timer(per_iteration, timer)));
            }
        }
        let table = bucket_task_times(problem.kind(), problem.order() as u64, &samples, plan.buckets, speed)?;
        if table.buckets().iter().any(|b| b.samples < MIN_SAMPLES_PER_BUCKET) {
            partial = true;
        }
        tables.push(table);
    }

    if partial {
        log::warn!("calibration profile is partial: some costs have fewer samples than requested");
    }
    Ok(CalibrationProfile::new(speed, thread_creation, overhead, tables)?.with_metadata(timer, partial))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_profile() -> CalibrationProfile {
        let speed = 41_600e6;
        let table = bucket_task_times(
            KernelKind::AdjointConvolution,
            4,
            &(0..16).map(|i| (i, (16 - i) as f64 * 1.25e-7)).collect::<Vec<_>>(),
            4,
            speed,
        )
        .unwrap();
        let tc = BTreeMap::from([(2, Cost::from_seconds(3.1e-5, speed)), (4, Cost::from_seconds(6.7e-5, speed))]);
        let oh = [1.0e-8, 2.5e-8, 1.8e-8, 1.9e-8].map(|s| Cost::from_seconds(s, speed));
        CalibrationProfile::new(speed, tc, oh, vec![table])
            .unwrap()
            .with_metadata(2.3e-8, true)
    }

    #[test]
    fn conversion_examples() {
        let c = Cost::from_seconds(18e-9, 41_600e6);
        assert!((c.flop - 748.8).abs() < 1e-9);
        assert_eq!(seconds_to_flop(0.0, 41_600e6), 0.0);
    }

    #[test]
    fn round_trip() {
        let p = sample_profile();
        let text = p.to_file_string();
        assert_eq!(CalibrationProfile::parse(Path::new("p"), &text).unwrap(), p);
    }

    #[test]
    fn missing_technique_row() {
        let text = sample_profile().to_file_string().replace("gss,", "# gss,");
        let err = CalibrationProfile::parse(Path::new("p"), &text).unwrap_err();
        assert!(err.to_string().contains("gss"), "{err}");
    }

    #[test]
    fn malformed_line_number() {
        let text = sample_profile().to_file_string();
        let mut lines: Vec<&str> = text.lines().collect();
        let at = lines.iter().position(|l| l.starts_with("static,")).unwrap();
        lines[at] = "static,abc,1";
        let err = CalibrationProfile::parse(Path::new("p"), &lines.join("\n")).unwrap_err();
        assert!(err.to_string().contains(&format!("p:{}:", at + 1)), "{err}");
    }

    #[test]
    fn bucket_interpolation() {
        let speed = 1.0;
        let samples: Vec<_> = (0..100).map(|i| (i, 100.0 - i as f64)).collect();
        let table = bucket_task_times(KernelKind::AdjointConvolution, 10, &samples, 4, speed).unwrap();
        assert_eq!(table.buckets().len(), 4);
        assert_eq!(table.buckets()[0].start, 0);
        assert_eq!(table.buckets()[3].end, 100);
        // linear data: interpolation is exact between the first and last centre
        for id in 13..87 {
            assert!((table.flop_at(id) - (100.0 - id as f64)).abs() < 1e-9, "{id}");
        }
        // exact mode
        let exact = bucket_task_times(KernelKind::MatMul, 3, &[(4, 2.0), (4, 4.0)], 64, speed).unwrap();
        assert_eq!(exact.buckets().len(), 9);
        assert_eq!(exact.flop_at(4), 3.0);
    }

    #[test]
    fn homogeneous_kernel_single_bucket() {
        let samples: Vec<_> = (0..64).map(|i| (i, 1e-6 * (1.0 + (i % 3) as f64 * 0.1))).collect();
        let t = bucket_task_times(KernelKind::MatMul, 8, &samples, 1, 1e9).unwrap();
        assert_eq!(t.buckets().len(), 1);
        assert_eq!(t.buckets()[0].samples, 64);
        assert_eq!(t.flop_at(0), t.flop_at(63));
    }

    #[test]
    fn timer_correction() {
        assert!((correct_for_timer(5e-7, 5e-8) - 4.5e-7).abs() < 1e-20);
        // 2% of the sample: left alone
        assert_eq!(correct_for_timer(5e-7, 1e-8), 5e-7);
        assert_eq!(correct_for_timer(2e-6, 1e-6), 2e-6);
        assert_eq!(correct_for_timer(1e-9, 1e-8), 0.0);
    }

    #[test]
    fn rp3_constants_profile_file() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/rp3.profile");
        let p = read_profile(&path).unwrap();
        assert_eq!(p.overhead(SchedulingTechnique::Static).flop, 75.0);
        assert_eq!(p.overhead(SchedulingTechnique::SelfScheduling).flop, 400.0);
        assert_eq!(p.overhead(SchedulingTechnique::Guided).flop, 750.0);
        assert_eq!(p.overhead(SchedulingTechnique::Factoring).flop, 750.0);
    }

    #[test]
    fn small_calibration_run() {
        let plan = CalibrationPlan {
            kernels: vec![(KernelKind::MatMul, 8), (KernelKind::AdjointConvolution, 6)],
            techniques: SchedulingTechnique::ALL.to_vec(),
            thread_counts: vec![1, 2],
            reps: 2,
            nominal_core_speed: 41_600e6,
            buckets: DEFAULT_BUCKETS,
            pinning: Pinning::None,
            seed: 1,
        };
        let p = calibrate(&plan).unwrap();
        assert_eq!(p.thread_creation().len(), 2);
        assert_eq!(p.tasks(KernelKind::MatMul).unwrap().iterations(), 64);
        // 2 samples per iteration cannot fill 32-sample buckets
        assert!(p.is_partial());
        let back = CalibrationProfile::parse(Path::new("x"), &p.to_file_string()).unwrap();
        assert_eq!(back, p);
    }
}
