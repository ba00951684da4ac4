//! Deterministic discrete-event simulation of decentralized self-scheduling.
//!
//! Idle hosts claim the next scheduling step. Each claim runs a
//! scheduling-overhead compute task on the claiming host, then a transfer of
//! the chunk's data from host 0, then the chunk's iterations one after the
//! other. Host 0 first runs a thread-creation task that gates all claims.
//!
//! Time is kept in integer picoseconds.

mod engine;
mod platform;

use std::collections::BTreeMap;

pub use engine::{simulate, CommMode, Granularity, SimChunkRecord, SimOptions, SimResult, TaskRecord, TaskStage};
pub use platform::{load_platform, parse_platform, PlatformSpec};

use crate::calibration::{CalibrationProfile, TaskTable};
use crate::error::{Error, Result};
use crate::kernels::{KernelCostModel, ELEMENT_WIDTH};
use crate::sched::SchedulingTechnique;

pub const PS_PER_SECOND: f64 = 1e12;

/// Seconds to integer picoseconds, rounded to nearest.
pub fn seconds_to_ps(seconds: f64) -> u64 {
    (seconds * PS_PER_SECOND).round() as u64
}

pub fn ps_to_seconds(ps: u64) -> f64 {
    ps as f64 / PS_PER_SECOND
}

/// Duration of `flop` on a host running at `speed` FLOP/s.
pub fn flop_to_ps(flop: f64, speed: f64) -> u64 {
    seconds_to_ps(flop / speed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverheadSource {
    Constants,
    CalibrationProfile,
}

/// Scheduling and thread-creation overheads in FLOP.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadModel {
    per_step_flop: [f64; 4],
    thread_creation_flop: BTreeMap<u64, f64>,
    source: OverheadSource,
}

impl OverheadModel {
    pub fn new(per_step_flop: [f64; 4], thread_creation_flop: BTreeMap<u64, f64>, source: OverheadSource) -> Result<Self> {
        if per_step_flop.iter().chain(thread_creation_flop.values()).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("overheads must be finite and non-negative"));
        }
        Ok(OverheadModel {
            per_step_flop,
            thread_creation_flop,
            source,
        })
    }

    /// No overhead at all.
    pub fn zero() -> Self {
        OverheadModel {
            per_step_flop: [0.0; 4],
            thread_creation_flop: BTreeMap::new(),
            source: OverheadSource::Constants,
        }
    }

    /// 75, 400, 750 and 750 FLOP per step for STATIC, SS, GSS and FAC;
    /// no thread-creation cost.
    pub fn rp3() -> Self {
        OverheadModel {
            per_step_flop: [75.0, 400.0, 750.0, 750.0],
            thread_creation_flop: BTreeMap::new(),
            source: OverheadSource::Constants,
        }
    }

    pub fn from_profile(profile: &CalibrationProfile) -> Self {
        let mut per_step_flop = [0.0; 4];
        for t in SchedulingTechnique::ALL {
            per_step_flop[t.index()] = profile.overhead(t).flop;
        }
        OverheadModel {
            per_step_flop,
            thread_creation_flop: profile.thread_creation().iter().map(|(&p, s)| (p, s.flop)).collect(),
            source: OverheadSource::CalibrationProfile,
        }
    }

    pub fn source(&self) -> OverheadSource {
        self.source
    }

    pub fn per_step_flop(&self, technique: SchedulingTechnique) -> f64 {
        self.per_step_flop[technique.index()]
    }

    /// Thread-creation work for `threads` workers: exact table entry,
    /// otherwise linear interpolation between neighbours, clamped at the
    /// table ends. An empty table means zero.
    pub fn thread_creation_flop(&self, threads: u64) -> f64 {
        let table = &self.thread_creation_flop;
        if let Some(v) = table.get(&threads) {
            return *v;
        }
        let below = table.range(..threads).next_back();
        let above = table.range(threads..).next();
        match (below, above) {
            (None, None) => 0.0,
            (Some((_, v)), None) | (None, Some((_, v))) => *v,
            (Some((&p0, &v0)), Some((&p1, &v1))) => {
                v0 + (v1 - v0) * (threads - p0) as f64 / (p1 - p0) as f64
            }
        }
    }
}

/// Where per-iteration work comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkSource {
    Model(KernelCostModel),
    /// Explicit FLOP per iteration.
    Table(Vec<f64>),
    /// Calibrated per-iteration work.
    Profile(TaskTable),
}

impl WorkSource {
    fn flop(&self, id: u64) -> f64 {
        match self {
            WorkSource::Model(m) => m.flop_unchecked(id),
            WorkSource::Table(t) => t[id as usize],
            WorkSource::Profile(t) => t.flop_at(id),
        }
    }
}

/// Everything about the loop being simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct SimJob {
    pub technique: SchedulingTechnique,
    pub work: WorkSource,
    pub iterations: u64,
    pub threads: u64,
    /// Row length of the matrices; a chunk moves `size * row_length * 8` bytes.
    pub row_length: u64,
}

impl SimJob {
    pub fn from_model(technique: SchedulingTechnique, model: KernelCostModel, threads: u64) -> Self {
        SimJob {
            technique,
            iterations: model.total_iterations(),
            row_length: model.row_length(),
            work: WorkSource::Model(model),
            threads,
        }
    }

    pub fn from_table(technique: SchedulingTechnique, flop: Vec<f64>, iterations: u64, threads: u64, row_length: u64) -> Result<Self> {
        if (flop.len() as u64) < iterations {
            return Err(Error::invalid(format!(
                "cost table has {} entries but {iterations} iterations were requested",
                flop.len()
            )));
        }
        if flop.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(Error::invalid("cost table entries must be finite and non-negative"));
        }
        Ok(SimJob {
            technique,
            work: WorkSource::Table(flop),
            iterations,
            threads,
            row_length,
        })
    }

    pub fn from_profile(technique: SchedulingTechnique, table: &TaskTable, threads: u64) -> Self {
        SimJob {
            technique,
            iterations: table.iterations(),
            row_length: table.matrix_order(),
            work: WorkSource::Profile(table.clone()),
            threads,
        }
    }

    pub(crate) fn chunk_bytes(&self, size: u64) -> u64 {
        size * self.row_length * ELEMENT_WIDTH
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_creation_interpolates() {
        let table = BTreeMap::from([(2, 100.0), (8, 400.0)]);
        let m = OverheadModel::new([0.0; 4], table, OverheadSource::CalibrationProfile).unwrap();
        assert_eq!(m.thread_creation_flop(2), 100.0);
        assert_eq!(m.thread_creation_flop(4), 200.0);
        assert_eq!(m.thread_creation_flop(1), 100.0);
        assert_eq!(m.thread_creation_flop(64), 400.0);
        assert_eq!(OverheadModel::rp3().thread_creation_flop(16), 0.0);
    }

    #[test]
    fn rejects_negative_overhead() {
        assert!(OverheadModel::new([1.0, -1.0, 0.0, 0.0], BTreeMap::new(), OverheadSource::Constants).is_err());
    }

    #[test]
    fn short_table_rejected() {
        let err = SimJob::from_table(SchedulingTechnique::Static, vec![1.0; 3], 4, 2, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn conversions() {
        assert_eq!(flop_to_ps(21_175.0, 1.562e6), 13_556_338_028);
        assert_eq!(seconds_to_ps(2e-6), 2_000_000);
        assert_eq!(ps_to_seconds(1_500_000_000_000), 1.5);
    }
}
