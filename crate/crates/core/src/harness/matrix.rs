use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::reference::{write_results, CellKey, ResultRow};
use super::stats::{repeat_until_ci, ExperimentStats, StoppingRule};
use crate::calibration::{read_profile, CalibrationProfile};
use crate::error::{Error, Result};
use crate::kernels::{max_relative_difference, KernelCostModel, KernelKind, KernelProblem, RP3_G1, RP3_G2};
use crate::keyvalue::KeyValues;
use crate::native::{run_parallel, NativeRunConfig, Pinning, VALIDATION_TOLERANCE};
use crate::sched::SchedulingTechnique;
use crate::sim::{load_platform, simulate, CommMode, OverheadModel, PlatformSpec, SimJob, SimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    /// Analytic costs on the RP3 description, networked transfers.
    SimulateRp3,
    /// Calibrated costs on the KNL description, shared memory.
    SimulateKnl,
    Native,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::SimulateRp3 => "simulate-rp3",
            Mode::SimulateKnl => "simulate-knl",
            Mode::Native => "native",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "simulate-rp3" => Ok(Mode::SimulateRp3),
            "simulate-knl" => Ok(Mode::SimulateKnl),
            "native" => Ok(Mode::Native),
            other => Err(Error::invalid(format!(
                "unknown mode '{other}' (expected simulate-rp3, simulate-knl or native)"
            ))),
        }
    }
}

/// A kernel and its matrix order, written `mm:300`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub order: usize,
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.order)
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, order) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("kernel '{s}' must be written kind:order, e.g. mm:300")))?;
        let order: usize = order
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("invalid matrix order in '{s}'")))?;
        if order == 0 {
            return Err(Error::invalid("matrix order must be at least 1"));
        }
        Ok(KernelSpec {
            kind: kind.parse()?,
            order,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentMatrix {
    pub mode: Mode,
    pub kernels: Vec<KernelSpec>,
    pub techniques: Vec<SchedulingTechnique>,
    pub thread_counts: Vec<usize>,
    pub platform: Option<PathBuf>,
    pub profile: Option<PathBuf>,
    pub g1: f64,
    pub g2: f64,
    pub stopping: StoppingRule,
    pub pinning: Pinning,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl ExperimentMatrix {
    pub fn new(mode: Mode, kernels: Vec<KernelSpec>, thread_counts: Vec<usize>) -> Self {
        ExperimentMatrix {
            mode,
            kernels,
            techniques: SchedulingTechnique::ALL.to_vec(),
            thread_counts,
            platform: None,
            profile: None,
            g1: RP3_G1,
            g2: RP3_G2,
            stopping: StoppingRule::default(),
            pinning: Pinning::None,
            seed: 42,
            output: None,
        }
    }

    /// The RP3 reproduction matrix: MM 300x300 and AC-d 75x75, four
    /// techniques, 4 to 56 threads.
    pub fn rp3() -> Self {
        ExperimentMatrix::new(
            Mode::SimulateRp3,
            vec![
                KernelSpec {
                    kind: KernelKind::MatMul,
                    order: 300,
                },
                KernelSpec {
                    kind: KernelKind::AdjointConvolution,
                    order: 75,
                },
            ],
            vec![4, 8, 16, 24, 32, 40, 48, 56],
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() {
            return Err(Error::invalid("experiment matrix has no kernels"));
        }
        if self.techniques.is_empty() {
            return Err(Error::invalid("experiment matrix has no techniques"));
        }
        if self.thread_counts.is_empty() {
            return Err(Error::invalid("experiment matrix has no thread counts"));
        }
        if self.thread_counts[0] == 0 || self.thread_counts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("thread counts must be positive and strictly increasing"));
        }
        if self.mode == Mode::SimulateKnl && self.profile.is_none() {
            return Err(Error::invalid("simulate-knl mode needs a calibration profile"));
        }
        if self.mode == Mode::Native && (self.stopping.min_reps < 20 || self.stopping.max_reps > 100) {
            return Err(Error::invalid("native mode repeats between 20 and 100 times"));
        }
        Ok(())
    }

    /// Reads a sweep configuration. Relative paths are resolved against the
    /// configuration file's directory.
    pub fn from_config(path: &Path) -> Result<Self> {
        let kv = KeyValues::read(path)?;
        const KNOWN: [&str; 15] = [
            "mode", "kernels", "techniques", "threads", "platform", "profile", "g1", "g2", "min_reps", "max_reps",
            "ci_target", "confidence_level", "pin", "seed", "output",
        ];
        for key in kv.keys() {
            if !KNOWN.contains(&key) {
                return Err(kv.error(key, format!("unknown sweep key '{key}'")));
            }
        }
        let wrap = |key: &str| {
            let kv = &kv;
            let key = key.to_string();
            move |e: Error| kv.error(&key, e.to_string())
        };
        let mode: Mode = kv.required_raw("mode")?.parse().map_err(wrap("mode"))?;
        let kernels = kv
            .required_raw("kernels")?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<KernelSpec>>>()
            .map_err(wrap("kernels"))?;
        let thread_counts = kv.get_list("threads")?.unwrap_or_default();
        let mut m = ExperimentMatrix::new(mode, kernels, thread_counts);
        if let Some(raw) = kv.raw("techniques") {
            m.techniques = raw
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect::<Result<_>>()
                .map_err(wrap("techniques"))?;
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &str| base.join(p);
        m.platform = kv.raw("platform").map(resolve);
        m.profile = kv.raw("profile").map(resolve);
        m.output = kv.raw("output").map(resolve);
        m.g1 = kv.get("g1")?.unwrap_or(m.g1);
        m.g2 = kv.get("g2")?.unwrap_or(m.g2);
        m.stopping.min_reps = kv.get("min_reps")?.unwrap_or(m.stopping.min_reps);
        m.stopping.max_reps = kv.get("max_reps")?.unwrap_or(m.stopping.max_reps);
        m.stopping.target = kv.get("ci_target")?.unwrap_or(m.stopping.target);
        m.stopping.level = kv.get("confidence_level")?.unwrap_or(m.stopping.level);
        m.seed = kv.get("seed")?.unwrap_or(m.seed);
        m.pinning = match kv.raw("pin") {
            None | Some("none") => Pinning::None,
            Some("scatter") => Pinning::Scatter,
            Some(other) => return Err(kv.error("pin", format!("unknown pinning '{other}'"))),
        };
        m.validate().map_err(|e| kv.error("threads", e.to_string()))?;
        Ok(m)
    }

    fn cells(&self) -> impl Iterator<Item = CellKey> + '_ {
        self.kernels.iter().flat_map(move |&kernel| {
            self.techniques.iter().flat_map(move |&technique| {
                self.thread_counts.iter().map(move |&threads| CellKey {
                    kernel,
                    technique,
                    threads,
                })
            })
        })
    }
}

/// Everything a matrix run produced.
#[derive(Debug, Clone, Default)]
pub struct MatrixOutput {
    pub rows: Vec<ResultRow>,
    pub stats: BTreeMap<CellKey, ExperimentStats>,
    pub failures: Vec<(CellKey, String)>,
    mode: Option<Mode>,
}

impl MatrixOutput {
    pub fn write_results<W: Write>(&self, w: W) -> Result<()> {
        write_results(&self.rows, w)
    }

    pub fn write_samples<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "kernel,technique,threads,rep,time_s")?;
        for row in &self.rows {
            if let Some(stats) = self.stats.get(&row.key) {
                for (i, s) in stats.samples.iter().enumerate() {
                    writeln!(w, "{},{},{}", row.key, i, s)?;
                }
            }
        }
        Ok(())
    }

    /// Whitespace-separated parallel costs: one row per thread count, one
    /// column per technique.
    pub fn plot_data(&self, kernel: KernelSpec) -> String {
        let mut techniques: Vec<SchedulingTechnique> = Vec::new();
        let mut threads: Vec<usize> = Vec::new();
        let mut values = BTreeMap::new();
        for row in self.rows.iter().filter(|r| r.key.kernel == kernel) {
            if !techniques.contains(&row.key.technique) {
                techniques.push(row.key.technique);
            }
            if !threads.contains(&row.key.threads) {
                threads.push(row.key.threads);
            }
            values.insert((row.key.threads, row.key.technique), row.parallel_cost_ps);
        }
        threads.sort_unstable();
        let mode = self.mode.map_or("", Mode::name);
        let mut out = format!("# kernel {kernel} mode {mode} parallel cost (processor-seconds)\n# threads");
        for t in &techniques {
            out.push(' ');
            out.push_str(t.name());
        }
        out.push('\n');
        for p in threads {
            out.push_str(&p.to_string());
            for &t in &techniques {
                out.push(' ');
                match values.get(&(p, t)) {
                    Some(v) => out.push_str(&v.to_string()),
                    None => out.push_str("nan"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Writes `results.csv`, `samples.csv`, one `plot_<kernel>_<order>_<mode>.dat`
    /// per kernel and `report.txt`.
    pub fn write_all(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p).map(std::io::BufWriter::new).map_err(|e| Error::io(p, e))
        };
        self.write_results(create("results.csv")?)?;
        let io = |name: &str| {
            let p = dir.join(name);
            move |e| Error::io(p, e)
        };
        self.write_samples(create("samples.csv")?).map_err(io("samples.csv"))?;
        let mode = self.mode.map_or("unknown", Mode::name);
        let mut kernels: Vec<KernelSpec> = self.rows.iter().map(|r| r.key.kernel).collect();
        kernels.dedup();
        for k in kernels {
            let name = format!("plot_{}_{}_{}.dat", k.kind, k.order, mode);
            std::fs::write(dir.join(&name), self.plot_data(k)).map_err(io(&name))?;
        }
        let mut report = create("report.txt")?;
        writeln!(report, "mode: {mode}").map_err(io("report.txt"))?;
        writeln!(report, "cells: {} ok, {} failed", self.rows.len(), self.failures.len()).map_err(io("report.txt"))?;
        for (key, reason) in &self.failures {
            writeln!(report, "failed {key}: {reason}").map_err(io("report.txt"))?;
        }
        Ok(())
    }
}

/// Resolved inputs for simulated cells.
pub(crate) struct SimContext {
    platform: PlatformSpec,
    overheads: OverheadModel,
    profile: Option<CalibrationProfile>,
    comm_mode: CommMode,
}

impl SimContext {
    fn new(matrix: &ExperimentMatrix) -> Result<Self> {
        let knl = matrix.mode == Mode::SimulateKnl;
        let platform = match &matrix.platform {
            Some(p) => load_platform(p)?,
            None if knl => PlatformSpec::knl(),
            None => PlatformSpec::rp3(),
        };
        let profile = matrix.profile.as_deref().map(read_profile).transpose()?;
        if let Some(p) = profile.as_ref().filter(|p| p.is_partial()) {
            log::warn!("calibration profile is partial (timer overhead {:e} s)", p.timer_overhead_s());
        }
        let overheads = profile.as_ref().map_or_else(OverheadModel::rp3, OverheadModel::from_profile);
        Ok(SimContext {
            platform,
            overheads,
            profile,
            comm_mode: if knl { CommMode::SharedMemory } else { CommMode::Networked },
        })
    }

    fn job(&self, matrix: &ExperimentMatrix, key: CellKey) -> Result<SimJob> {
        let threads = key.threads as u64;
        if matrix.mode == Mode::SimulateKnl {
            let profile = self.profile.as_ref().expect("validated");
            let table = profile
                .tasks(key.kernel.kind)
                .ok_or_else(|| Error::invalid(format!("profile has no task times for {}", key.kernel.kind)))?;
            if table.matrix_order() != key.kernel.order as u64 {
                return Err(Error::invalid(format!(
                    "profile task times are for order {}, not {}",
                    table.matrix_order(),
                    key.kernel.order
                )));
            }
            return Ok(SimJob::from_profile(key.technique, table, threads));
        }
        let model = KernelCostModel::new(key.kernel.kind, key.kernel.order as u64, matrix.g1, matrix.g2)?;
        Ok(SimJob::from_model(key.technique, model, threads))
    }

    fn run(&self, matrix: &ExperimentMatrix, key: CellKey) -> Result<f64> {
        let job = self.job(matrix, key)?;
        let options = SimOptions {
            comm_mode: self.comm_mode,
            ..Default::default()
        };
        Ok(simulate(&job, &self.platform, &self.overheads, options)?.makespan())
    }
}

/// Runs every cell of the matrix. A failing cell is recorded and skipped.
pub fn run_matrix(matrix: &ExperimentMatrix) -> Result<MatrixOutput> {
    matrix.validate()?;
    let mut out = MatrixOutput {
        mode: Some(matrix.mode),
        ..Default::default()
    };
    let record = |out: &mut MatrixOutput, key: CellKey, result: Result<ExperimentStats>| match result {
        Ok(stats) => {
            out.rows.push(ResultRow {
                key,
                mode: matrix.mode,
                mean_time_s: stats.mean_time,
                ci_half_width_s: stats.ci_half_width,
                reps: stats.repetitions,
                parallel_cost_ps: stats.parallel_cost(),
            });
            out.stats.insert(key, stats);
        }
        Err(e) => {
            log::warn!("cell {key} failed: {e}");
            out.failures.push((key, e.to_string()));
        }
    };

    match matrix.mode {
        Mode::SimulateRp3 | Mode::SimulateKnl => {
            let ctx = SimContext::new(matrix)?;
            for key in matrix.cells() {
                let result = ctx.run(matrix, key).map(|t| ExperimentStats::single(t, key.threads));
                record(&mut out, key, result);
            }
        }
        Mode::Native => {
            let mut problems = BTreeMap::new();
            for key in matrix.cells() {
                let (problem, reference) = match problems.entry(key.kernel) {
                    Entry::Occupied(e) => e.into_mut(),
                    Entry::Vacant(e) => {
                        let p = KernelProblem::random(key.kernel.kind, key.kernel.order, matrix.seed)?;
                        let reference = p.serial_reference();
                        e.insert((p, reference))
                    }
                };
                let result = native_cell(matrix, key, problem, reference);
                record(&mut out, key, result);
            }
        }
    }
    Ok(out)
}

fn native_cell(matrix: &ExperimentMatrix, key: CellKey, problem: &KernelProblem, reference: &[f64]) -> Result<ExperimentStats> {
    let mut config = NativeRunConfig::new(problem, key.technique, key.threads);
    config.pinning = matrix.pinning;
    let mut first = true;
    repeat_until_ci(matrix.stopping, key.threads, || {
        let r = run_parallel(&config)?;
        if std::mem::take(&mut first) {
            r.verify_partition(problem.total_iterations())?;
            let err = max_relative_difference(&r.output, reference);
            if err.is_nan() || err > VALIDATION_TOLERANCE {
                return Err(Error::Validation(format!("output deviates from the serial reference by {err:e}")));
            }
        }
        Ok(r.wall_time)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_spec_parsing() {
        let k: KernelSpec = "mm:300".parse().unwrap();
        assert_eq!(k.to_string(), "mm:300");
        assert!("mm".parse::<KernelSpec>().is_err());
        assert!("mm:0".parse::<KernelSpec>().is_err());
        assert!("gj:10".parse::<KernelSpec>().is_err());
    }

    #[test]
    fn empty_threads_rejected() {
        let m = ExperimentMatrix::new(Mode::SimulateRp3, ExperimentMatrix::rp3().kernels, vec![]);
        assert!(matches!(run_matrix(&m), Err(Error::InvalidArgument(_))));
        let m = ExperimentMatrix::new(Mode::SimulateRp3, ExperimentMatrix::rp3().kernels, vec![4, 4]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.conf");
        std::fs::write(
            &path,
            "mode = native\nkernels = mm:8, acd:4\ntechniques = ss, fac\nthreads = 1, 2\nplatform = p.txt\nmin_reps = 20\nmax_reps = 30\n",
        )
        .unwrap();
        let m = ExperimentMatrix::from_config(&path).unwrap();
        assert_eq!(m.mode, Mode::Native);
        assert_eq!(m.techniques, vec![SchedulingTechnique::SelfScheduling, SchedulingTechnique::Factoring]);
        assert_eq!(m.platform.as_deref(), Some(dir.path().join("p.txt").as_path()));
        assert_eq!(m.stopping.max_reps, 30);

        let out = run_matrix(&m).unwrap();
        assert_eq!(out.rows.len(), 8);
        assert!(out.rows.iter().all(|r| (20..=100).contains(&r.reps)));

        std::fs::write(&path, "mode = native\nkernels = mm:8\nthreads = 1\nmin_reps = 5\n").unwrap();
        assert!(ExperimentMatrix::from_config(&path).is_err());
        std::fs::write(&path, "mode = native\nkernels = mm:8\nthreads = 1\ncolour = red\n").unwrap();
        assert!(ExperimentMatrix::from_config(&path).is_err());
    }

    #[test]
    fn knl_cell_without_task_table_fails_but_matrix_continues() {
        let dir = tempfile::tempdir().unwrap();
        let profile = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/rp3.profile");
        let mut m = ExperimentMatrix::new(Mode::SimulateKnl, vec!["mm:8".parse().unwrap()], vec![2]);
        m.profile = Some(profile);
        let out = run_matrix(&m).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(out.failures.len(), 4);
        out.write_all(dir.path()).unwrap();
        let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
        assert!(report.contains("0 ok, 4 failed"), "{report}");
    }

    #[test]
    fn plot_data_layout() {
        let mut m = ExperimentMatrix::new(Mode::SimulateRp3, vec!["acd:6".parse().unwrap()], vec![2, 4]);
        m.techniques = vec![SchedulingTechnique::Static, SchedulingTechnique::Guided];
        let out = run_matrix(&m).unwrap();
        let text = out.plot_data(m.kernels[0]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "# threads static gss");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("2 ") && lines[3].starts_with("4 "));
        assert_eq!(lines[2].split_whitespace().count(), 3);
    }
}
