//! Command-line front end: chunk plans, simulation, native runs,
//! calibration, sweeps and comparison against reference data.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loopsched::calibration::{calibrate, write_profile, CalibrationPlan, DEFAULT_BUCKETS};
use loopsched::harness::{self, compare, load_reference, load_results, run_matrix, ExperimentMatrix};
use loopsched::native::{run_parallel, NativeRunConfig, Pinning};
use loopsched::sim::{load_platform, simulate, CommMode, OverheadModel, SimJob, SimOptions};
use loopsched::{build_chunk_plan, Error, KernelCostModel, KernelKind, KernelProblem, SchedulingTechnique};

const SEED_VAR: &str = "LOOPSCHED_SEED";

#[derive(Parser)]
#[command(name = "loopsched", version, about = "Dynamic loop scheduling: plans, simulation and native runs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the chunk sizes a technique produces.
    Plan {
        #[arg(long)]
        technique: SchedulingTechnique,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        p: u64,
    },
    /// Simulate one loop on a platform description.
    Simulate(SimulateArgs),
    /// Execute one loop natively with worker threads.
    Run(RunArgs),
    /// Measure this machine and write a calibration profile.
    Calibrate(CalibrateArgs),
    /// Percent error of results against reference parallel costs.
    Compare {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Only compare against this reference source.
        #[arg(long)]
        source: Option<String>,
    },
    /// Run an experiment matrix described by a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    platform: PathBuf,
    #[arg(long)]
    kernel: KernelKind,
    /// Matrix order.
    #[arg(long)]
    size: u64,
    #[arg(long)]
    technique: SchedulingTechnique,
    #[arg(long)]
    threads: u64,
    /// Take overheads (and task costs, if present) from a calibration profile.
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Treat transfers as free.
    #[arg(long)]
    shared_memory: bool,
    /// Write the per-chunk log as CSV to this file.
    #[arg(long)]
    chunk_log: Option<PathBuf>,
    #[arg(long, default_value_t = loopsched::kernels::RP3_G1)]
    g1: f64,
    #[arg(long, default_value_t = loopsched::kernels::RP3_G2)]
    g2: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PinArg {
    None,
    Scatter,
}

impl From<PinArg> for Pinning {
    fn from(p: PinArg) -> Self {
        match p {
            PinArg::None => Pinning::None,
            PinArg::Scatter => Pinning::Scatter,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    kernel: KernelKind,
    #[arg(long)]
    size: usize,
    #[arg(long)]
    technique: SchedulingTechnique,
    #[arg(long)]
    threads: usize,
    #[arg(long, value_enum, default_value = "none")]
    pin: PinArg,
    /// Compare the output with a serial run.
    #[arg(long)]
    validate: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Kernels to time, as kind:order.
    #[arg(long, value_delimiter = ',', default_value = "mm:512,acd:128")]
    kernels: Vec<harness::KernelSpec>,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    threads: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// Nominal core speed in FLOP/s used to convert seconds into FLOP.
    #[arg(long, default_value_t = 41_600e6)]
    speed: f64,
    #[arg(long, default_value_t = DEFAULT_BUCKETS)]
    buckets: usize,
    #[arg(long, value_enum, default_value = "none")]
    pin: PinArg,
    #[arg(long)]
    out: PathBuf,
}

fn seed() -> loopsched::Result<u64> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{SEED_VAR} must be an unsigned integer, got '{v}'"))),
        Err(_) => Ok(42),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn stdout_err(source: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

fn run(cli: Cli) -> loopsched::Result<()> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Plan { technique, n, p } => {
            let plan = build_chunk_plan(technique, n, p)?;
            let sizes: Vec<String> = plan.chunk_sizes().iter().map(u64::to_string).collect();
            writeln!(out, "{}", sizes.join(" ")).map_err(stdout_err)?;
        }
        Command::Simulate(a) => {
            let platform = load_platform(&a.platform)?;
            let profile = a.profile.as_deref().map(loopsched::calibration::read_profile).transpose()?;
            let overheads = profile.as_ref().map_or_else(OverheadModel::rp3, OverheadModel::from_profile);
            let job = match profile.as_ref().and_then(|p| p.tasks(a.kernel)) {
                Some(table) if table.matrix_order() == a.size => SimJob::from_profile(a.technique, table, a.threads),
                _ => SimJob::from_model(a.technique, KernelCostModel::new(a.kernel, a.size, a.g1, a.g2)?, a.threads),
            };
            let options = SimOptions {
                comm_mode: if a.shared_memory { CommMode::SharedMemory } else { CommMode::Networked },
                ..Default::default()
            };
            let r = simulate(&job, &platform, &overheads, options)?;
            writeln!(out, "makespan_s {}", r.makespan()).map_err(stdout_err)?;
            writeln!(out, "parallel_cost {}", r.parallel_cost()).map_err(stdout_err)?;
            writeln!(out, "chunks {}", r.chunk_log.len()).map_err(stdout_err)?;
            if let Some(path) = &a.chunk_log {
                let f = std::fs::File::create(path).map_err(io_err(path))?;
                r.write_chunk_log(std::io::BufWriter::new(f)).map_err(io_err(path))?;
            }
        }
        Command::Run(a) => {
            let problem = KernelProblem::random(a.kernel, a.size, seed()?)?;
            let mut config = NativeRunConfig::new(&problem, a.technique, a.threads);
            config.pinning = a.pin.into();
            config.validate = a.validate;
            let r = run_parallel(&config)?;
            r.verify_partition(problem.total_iterations())?;
            writeln!(out, "wall_time_s {}", r.wall_time).map_err(stdout_err)?;
            writeln!(out, "parallel_cost {}", r.parallel_cost()).map_err(stdout_err)?;
            writeln!(out, "chunks {}", r.chunk_log.len()).map_err(stdout_err)?;
            if let Some(err) = r.max_relative_error {
                writeln!(out, "max_relative_error {err:e}").map_err(stdout_err)?;
            }
        }
        Command::Calibrate(a) => {
            let plan = CalibrationPlan {
                kernels: a.kernels.iter().map(|k| (k.kind, k.order)).collect(),
                techniques: SchedulingTechnique::ALL.to_vec(),
                thread_counts: a.threads,
                reps: a.reps,
                nominal_core_speed: a.speed,
                buckets: a.buckets,
                pinning: a.pin.into(),
                seed: seed()?,
            };
            let profile = calibrate(&plan)?;
            if profile.is_partial() {
                log::warn!("some buckets have fewer samples than requested; profile marked partial");
            }
            write_profile(&profile, &a.out)?;
            writeln!(out, "wrote {}", a.out.display()).map_err(stdout_err)?;
        }
        Command::Compare {
            results,
            reference,
            source,
        } => {
            let rows = load_results(&results)?;
            let mut series = load_reference(&reference)?;
            if let Some(s) = &source {
                series = series.filter_source(s);
            }
            let table = compare(&rows, &series)?;
            table.write_csv(&mut out).map_err(stdout_err)?;
            for s in &table.skipped {
                log::warn!("skipped {}: {}", s.key, s.reason);
            }
        }
        Command::Sweep { config, out: dir } => {
            let mut matrix = ExperimentMatrix::from_config(&config)?;
            if dir.is_some() {
                matrix.output = dir;
            }
            let result = run_matrix(&matrix)?;
            match &matrix.output {
                Some(dir) => {
                    result.write_all(dir)?;
                    writeln!(out, "wrote {} cells to {}", result.rows.len(), dir.display()).map_err(stdout_err)?;
                }
                None => result.write_results(&mut out)?,
            }
            for (key, reason) in &result.failures {
                eprintln!("cell {key} failed: {reason}");
            }
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) => 1,
        Error::Validation(_) => 3,
        Error::Parse { .. } | Error::Measurement(_) | Error::Runtime(_) | Error::Io { .. } => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
