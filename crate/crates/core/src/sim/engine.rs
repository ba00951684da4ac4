use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::io::{self, Write};

use super::{flop_to_ps, ps_to_seconds, seconds_to_ps, OverheadModel, PlatformSpec, SimJob};
use crate::error::{Error, Result};
use crate::sched::build_chunk_plan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CommMode {
    /// Chunk data travels from host 0 over a dedicated link.
    #[default]
    Networked,
    /// Threads share memory: transfers move 0 bytes and cost nothing.
    SharedMemory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    /// One event per claim; the chunk's iterations are summed.
    #[default]
    PerChunk,
    /// One event per task, with a full task trace.
    PerIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    pub comm_mode: CommMode,
    pub granularity: Granularity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimChunkRecord {
    pub step: u64,
    pub host: u64,
    pub start_iteration: u64,
    pub chunk_size: u64,
    /// Claim instant.
    pub start_ps: u64,
    /// Completion of the chunk's last iteration.
    pub end_ps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskStage {
    ThreadCreation,
    Overhead,
    Transfer,
    Iteration(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskRecord {
    pub host: u64,
    pub stage: TaskStage,
    pub start_ps: u64,
    pub end_ps: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub threads: u64,
    pub makespan_ps: u64,
    /// Compute time (thread creation, overhead and iterations) per host.
    pub per_host_busy_ps: Vec<u64>,
    /// Time each host spent waiting on inbound chunk transfers.
    pub per_host_comm_ps: Vec<u64>,
    pub chunk_log: Vec<SimChunkRecord>,
    /// Only filled in [`Granularity::PerIteration`] mode.
    pub trace: Vec<TaskRecord>,
}

impl SimResult {
    pub fn makespan(&self) -> f64 {
        ps_to_seconds(self.makespan_ps)
    }

    /// Makespan times the number of simulated threads.
    pub fn parallel_cost(&self) -> f64 {
        self.makespan() * self.threads as f64
    }

    pub fn per_host_busy_time(&self) -> Vec<f64> {
        self.per_host_busy_ps.iter().map(|&p| ps_to_seconds(p)).collect()
    }

    pub fn write_chunk_log<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step,host,start_iteration,chunk_size,start_ps,end_ps")?;
        for r in &self.chunk_log {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.step, r.host, r.start_iteration, r.chunk_size, r.start_ps, r.end_ps
            )?;
        }
        Ok(())
    }
}

struct Engine<'a> {
    job: &'a SimJob,
    speed: f64,
    overhead_ps: u64,
    latency_ps: u64,
    bandwidth: f64,
    comm_mode: CommMode,
    result: SimResult,
}

impl Engine<'_> {
    fn iteration_ps(&self, id: u64) -> u64 {
        flop_to_ps(self.job.work.flop(id), self.speed)
    }

    fn transfer_ps(&self, host: u64, size: u64) -> u64 {
        // Host 0 owns the data and never transfers to itself.
        if host == 0 || self.comm_mode == CommMode::SharedMemory {
            return 0;
        }
        let bits = (self.job.chunk_bytes(size) * 8) as f64;
        self.latency_ps + seconds_to_ps(bits / self.bandwidth)
    }
}

/// Runs the simulation to completion.
pub fn simulate(job: &SimJob, platform: &PlatformSpec, overheads: &OverheadModel, options: SimOptions) -> Result<SimResult> {
    platform.validate()?;
    if job.threads == 0 {
        return Err(Error::invalid("thread count must be at least 1"));
    }
    if job.threads > platform.host_count {
        return Err(Error::invalid(format!(
            "{} threads requested but the platform has only {} hosts",
            job.threads, platform.host_count
        )));
    }
    if let super::WorkSource::Table(t) = &job.work {
        if (t.len() as u64) < job.iterations {
            return Err(Error::invalid(format!(
                "cost table has {} entries but {} iterations were requested",
                t.len(),
                job.iterations
            )));
        }
    }
    if let super::WorkSource::Profile(t) = &job.work {
        if t.iterations() < job.iterations {
            return Err(Error::invalid("calibrated task table is shorter than the loop"));
        }
    }

    let plan = build_chunk_plan(job.technique, job.iterations, job.threads)?;
    let hosts = job.threads as usize;
    let mut engine = Engine {
        job,
        speed: platform.host_speed,
        overhead_ps: flop_to_ps(overheads.per_step_flop(job.technique), platform.host_speed),
        latency_ps: seconds_to_ps(platform.link_latency),
        bandwidth: platform.link_bandwidth,
        comm_mode: options.comm_mode,
        result: SimResult {
            threads: job.threads,
            makespan_ps: 0,
            per_host_busy_ps: vec![0; hosts],
            per_host_comm_ps: vec![0; hosts],
            chunk_log: Vec::with_capacity(plan.len()),
            trace: Vec::new(),
        },
    };

    let creation_ps = flop_to_ps(overheads.thread_creation_flop(job.threads), platform.host_speed);
    engine.result.per_host_busy_ps[0] += creation_ps;
    if options.granularity == Granularity::PerIteration {
        engine.result.trace.push(TaskRecord {
            host: 0,
            stage: TaskStage::ThreadCreation,
            start_ps: 0,
            end_ps: creation_ps,
        });
    }

    match options.granularity {
        Granularity::PerChunk => run_per_chunk(&mut engine, &plan, creation_ps),
        Granularity::PerIteration => run_per_iteration(&mut engine, &plan, creation_ps),
    }

    let last_chunk = engine.result.chunk_log.iter().map(|r| r.end_ps).max().unwrap_or(0);
    engine.result.makespan_ps = creation_ps.max(last_chunk);
    Ok(engine.result)
}

fn run_per_chunk(engine: &mut Engine<'_>, plan: &crate::sched::ChunkPlan, start_ps: u64) {
    let hosts = engine.job.threads as usize;
    let mut free = vec![true; hosts];
    let mut done: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut now = start_ps;
    let mut step = 0u64;
    let mut next_iteration = 0u64;

    loop {
        // Scan in ascending host order, as the scheduling loop does.
        for host in 0..hosts {
            if next_iteration >= engine.job.iterations {
                break;
            }
            if !free[host] {
                continue;
            }
            let size = plan.chunk(step);
            let transfer = engine.transfer_ps(host as u64, size);
            let compute: u64 = (next_iteration..next_iteration + size)
                .map(|id| engine.iteration_ps(id))
                .sum();
            let end = now + engine.overhead_ps + transfer + compute;
            engine.result.per_host_busy_ps[host] += engine.overhead_ps + compute;
            engine.result.per_host_comm_ps[host] += transfer;
            engine.result.chunk_log.push(SimChunkRecord {
                step,
                host: host as u64,
                start_iteration: next_iteration,
                chunk_size: size,
                start_ps: now,
                end_ps: end,
            });
            free[host] = false;
            done.push(Reverse((end, host)));
            step += 1;
            next_iteration += size;
        }
        let Some(Reverse((t, host))) = done.pop() else {
            break;
        };
        now = t;
        free[host] = true;
        while let Some(&Reverse((t, host))) = done.peek() {
            if t != now {
                break;
            }
            done.pop();
            free[host] = true;
        }
    }
}

fn run_per_iteration(engine: &mut Engine<'_>, plan: &crate::sched::ChunkPlan, start_ps: u64) {
    let hosts = engine.job.threads as usize;
    let mut free = vec![true; hosts];
    // Pending stages of each host's current claim, and its chunk-log index.
    let mut chains: Vec<VecDeque<(TaskStage, u64)>> = vec![VecDeque::new(); hosts];
    let mut current: Vec<usize> = vec![0; hosts];
    let mut events: BinaryHeap<Reverse<(u64, usize)>> = BinaryHeap::new();
    let mut now = start_ps;
    let mut step = 0u64;
    let mut next_iteration = 0u64;

    let start_next = |engine: &mut Engine<'_>,
                          chains: &mut [VecDeque<(TaskStage, u64)>],
                          events: &mut BinaryHeap<Reverse<(u64, usize)>>,
                          host: usize,
                          at: u64| {
        let (stage, dur) = chains[host].pop_front().expect("chain not empty");
        match stage {
            TaskStage::Transfer => engine.result.per_host_comm_ps[host] += dur,
            _ => engine.result.per_host_busy_ps[host] += dur,
        }
        engine.result.trace.push(TaskRecord {
            host: host as u64,
            stage,
            start_ps: at,
            end_ps: at + dur,
        });
        events.push(Reverse((at + dur, host)));
    };

    loop {
        for host in 0..hosts {
            if next_iteration >= engine.job.iterations {
                break;
            }
            if !free[host] {
                continue;
            }
            let size = plan.chunk(step);
            let chain = &mut chains[host];
            chain.push_back((TaskStage::Overhead, engine.overhead_ps));
            chain.push_back((TaskStage::Transfer, engine.transfer_ps(host as u64, size)));
            for id in next_iteration..next_iteration + size {
                chain.push_back((TaskStage::Iteration(id), engine.iteration_ps(id)));
            }
            current[host] = engine.result.chunk_log.len();
            engine.result.chunk_log.push(SimChunkRecord {
                step,
                host: host as u64,
                start_iteration: next_iteration,
                chunk_size: size,
                start_ps: now,
                end_ps: now,
            });
            free[host] = false;
            start_next(engine, &mut chains, &mut events, host, now);
            step += 1;
            next_iteration += size;
        }
        let Some(&Reverse((t, _))) = events.peek() else {
            break;
        };
        now = t;
        // Drain every completion at this instant, including zero-length
        // successors started along the way.
        while let Some(&Reverse((t, host))) = events.peek() {
            if t != now {
                break;
            }
            events.pop();
            if chains[host].is_empty() {
                engine.result.chunk_log[current[host]].end_ps = now;
                free[host] = true;
            } else {
                start_next(engine, &mut chains, &mut events, host, now);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelCostModel, KernelKind};
    use crate::sched::SchedulingTechnique::{self, *};
    use crate::sim::OverheadModel;

    fn unit_platform(hosts: u64) -> PlatformSpec {
        PlatformSpec::new(hosts, 1.0, 1.0, 0.0).unwrap()
    }

    fn unit_job(t: SchedulingTechnique, n: u64, p: u64) -> SimJob {
        SimJob::from_table(t, vec![1.0; n as usize], n, p, 1).unwrap()
    }

    fn shared() -> SimOptions {
        SimOptions {
            comm_mode: CommMode::SharedMemory,
            ..Default::default()
        }
    }

    #[test]
    fn balanced_equal_tasks() {
        for t in SchedulingTechnique::ALL {
            let r = simulate(&unit_job(t, 8, 4), &unit_platform(4), &OverheadModel::zero(), shared()).unwrap();
            assert_eq!(r.makespan(), 2.0, "{t}");
            assert_eq!(r.parallel_cost(), 8.0, "{t}");
        }
    }

    #[test]
    fn guided_sixteen_on_four() {
        let r = simulate(&unit_job(Guided, 16, 4), &unit_platform(4), &OverheadModel::zero(), shared()).unwrap();
        let sizes: Vec<_> = r.chunk_log.iter().map(|c| c.chunk_size).collect();
        assert_eq!(sizes, vec![4, 3, 3, 2, 1, 1, 1, 1]);
        let hosts: Vec<_> = r.chunk_log.iter().map(|c| c.host).collect();
        assert_eq!(hosts, vec![0, 1, 2, 3, 3, 1, 2, 3]);
        assert_eq!(r.makespan(), 4.0);
    }

    #[test]
    fn too_many_threads() {
        let err = simulate(&unit_job(Static, 8, 5), &unit_platform(4), &OverheadModel::zero(), shared()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains('5') && msg.contains('4'), "{msg}");
    }

    #[test]
    fn empty_loop() {
        let r = simulate(&unit_job(Factoring, 0, 4), &unit_platform(4), &OverheadModel::zero(), shared()).unwrap();
        assert_eq!(r.makespan_ps, 0);
        assert!(r.chunk_log.is_empty());
    }

    #[test]
    fn thread_creation_gates_claims() {
        let mut o = std::collections::BTreeMap::new();
        o.insert(2, 3.0);
        let overheads = OverheadModel::new([1.0; 4], o, crate::sim::OverheadSource::Constants).unwrap();
        let r = simulate(&unit_job(Static, 4, 2), &unit_platform(2), &overheads, shared()).unwrap();
        assert!(r.chunk_log.iter().all(|c| c.start_ps == 3_000_000_000_000));
        // 3 (creation) + 1 (overhead) + 2 (tasks)
        assert_eq!(r.makespan(), 6.0);
        assert_eq!(r.per_host_busy_ps, vec![6_000_000_000_000, 3_000_000_000_000]);
    }

    #[test]
    fn networked_transfer_costs() {
        // 1 FLOP/s, 8 bit/s links, 0.5 s latency; row length 1 so one
        // iteration moves 8 bytes = 64 bits = 8 s.
        let platform = PlatformSpec::new(2, 1.0, 8.0, 0.5).unwrap();
        let job = unit_job(Static, 2, 2);
        let r = simulate(&job, &platform, &OverheadModel::zero(), SimOptions::default()).unwrap();
        assert_eq!(r.chunk_log[0].end_ps, 1_000_000_000_000);
        assert_eq!(r.chunk_log[1].end_ps, 9_500_000_000_000);
        assert_eq!(r.per_host_comm_ps, vec![0, 8_500_000_000_000]);
        let r = simulate(&job, &platform, &OverheadModel::zero(), shared()).unwrap();
        assert_eq!(r.makespan(), 1.0);
    }

    #[test]
    fn granularities_agree() {
        let model = KernelCostModel::new(KernelKind::AdjointConvolution, 9, 1.0, 2.0).unwrap();
        let platform = PlatformSpec::new(8, 7.0, 1000.0, 0.01).unwrap();
        for t in SchedulingTechnique::ALL {
            for p in [1, 3, 8] {
                let job = SimJob::from_model(t, model, p);
                let a = simulate(&job, &platform, &OverheadModel::rp3(), SimOptions::default()).unwrap();
                let b = simulate(
                    &job,
                    &platform,
                    &OverheadModel::rp3(),
                    SimOptions {
                        granularity: Granularity::PerIteration,
                        ..Default::default()
                    },
                )
                .unwrap();
                assert_eq!(a.chunk_log, b.chunk_log, "{t} p={p}");
                assert_eq!(a.makespan_ps, b.makespan_ps);
                assert_eq!(a.per_host_busy_ps, b.per_host_busy_ps);
                assert_eq!(a.per_host_comm_ps, b.per_host_comm_ps);
                let iterations = b.trace.iter().filter(|r| matches!(r.stage, TaskStage::Iteration(_))).count();
                assert_eq!(iterations as u64, model.total_iterations());
            }
        }
    }

    #[test]
    fn zero_cost_claims_terminate() {
        let job = SimJob::from_table(SelfScheduling, vec![0.0; 10], 10, 3, 1).unwrap();
        for granularity in [Granularity::PerChunk, Granularity::PerIteration] {
            let opts = SimOptions {
                comm_mode: CommMode::SharedMemory,
                granularity,
            };
            let r = simulate(&job, &unit_platform(3), &OverheadModel::zero(), opts).unwrap();
            assert_eq!(r.chunk_log.len(), 10);
            assert_eq!(r.makespan_ps, 0);
        }
    }

    #[test]
    fn chunk_log_csv() {
        let r = simulate(&unit_job(Static, 4, 2), &unit_platform(2), &OverheadModel::zero(), shared()).unwrap();
        let mut buf = Vec::new();
        r.write_chunk_log(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "step,host,start_iteration,chunk_size,start_ps,end_ps\n0,0,0,2,0,2000000000000\n1,1,2,2,0,2000000000000\n"
        );
    }
}
