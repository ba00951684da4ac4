//! Chunk-size calculators for the four loop scheduling techniques.
//!
//! Every technique is a pure function of the iteration count `N`, the worker
//! count `P` and the scheduling step. Plans never depend on runtime state, so
//! the simulator and the native executor consume exactly the same sequence.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SchedulingTechnique {
    /// One chunk of `ceil(N/P)` iterations per worker.
    Static,
    /// Self-scheduling: one iteration per claim.
    SelfScheduling,
    /// Guided self-scheduling: `ceil(R/P)` of the remaining iterations.
    Guided,
    /// Factoring: batches of `P` equal chunks, each batch covering half of
    /// the remaining iterations.
    Factoring,
}

impl SchedulingTechnique {
    pub const ALL: [SchedulingTechnique; 4] = [
        SchedulingTechnique::Static,
        SchedulingTechnique::SelfScheduling,
        SchedulingTechnique::Guided,
        SchedulingTechnique::Factoring,
    ];

    /// Short lowercase name used in files and on the command line.
    pub fn name(self) -> &'static str {
        match self {
            SchedulingTechnique::Static => "static",
            SchedulingTechnique::SelfScheduling => "ss",
            SchedulingTechnique::Guided => "gss",
            SchedulingTechnique::Factoring => "fac",
        }
    }

    /// Position in [`SchedulingTechnique::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SchedulingTechnique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulingTechnique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "static" => Ok(SchedulingTechnique::Static),
            "ss" | "self" => Ok(SchedulingTechnique::SelfScheduling),
            "gss" | "guided" => Ok(SchedulingTechnique::Guided),
            "fac" | "factoring" => Ok(SchedulingTechnique::Factoring),
            other => Err(Error::invalid(format!(
                "unknown scheduling technique '{other}' (expected static, ss, gss or fac)"
            ))),
        }
    }
}

/// Streaming generator of a technique's chunk sequence.
///
/// [`build_chunk_plan`] and [`chunk_at_step`] are both built on this
/// iterator, which keeps the two views identical by construction.
#[derive(Debug, Clone)]
pub struct ChunkIter {
    technique: SchedulingTechnique,
    workers: u64,
    remaining: u64,
    // STATIC: fixed chunk size. FAC: size of the current batch.
    batch_size: u64,
    // FAC: chunks left in the current batch.
    batch_left: u64,
}

impl ChunkIter {
    pub fn new(technique: SchedulingTechnique, total: u64, workers: u64) -> Result<Self> {
        if workers == 0 {
            return Err(Error::invalid("worker count must be at least 1"));
        }
        let batch_size = match technique {
            SchedulingTechnique::Static => total.div_ceil(workers),
            _ => 0,
        };
        Ok(ChunkIter {
            technique,
            workers,
            remaining: total,
            batch_size,
            batch_left: 0,
        })
    }

    fn next_size(&mut self) -> u64 {
        match self.technique {
            SchedulingTechnique::Static => self.batch_size,
            SchedulingTechnique::SelfScheduling => 1,
            SchedulingTechnique::Guided => self.remaining.div_ceil(self.workers),
            SchedulingTechnique::Factoring => {
                if self.batch_left == 0 {
                    self.batch_size = self.remaining.div_ceil(2 * self.workers);
                    self.batch_left = self.workers;
                }
                self.batch_left -= 1;
                self.batch_size
            }
        }
    }
}

impl Iterator for ChunkIter {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        if self.remaining == 0 {
            return None;
        }
        // Truncate the final chunk so the plan covers exactly N iterations.
        let size = self.next_size().min(self.remaining);
        self.remaining -= size;
        Some(size)
    }
}

/// Full chunk sequence for one `(technique, N, P)` triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkPlan {
    technique: SchedulingTechnique,
    total_iterations: u64,
    workers: u64,
    chunk_sizes: Vec<u64>,
}

impl ChunkPlan {
    pub fn technique(&self) -> SchedulingTechnique {
        self.technique
    }

    pub fn total_iterations(&self) -> u64 {
        self.total_iterations
    }

    pub fn workers(&self) -> u64 {
        self.workers
    }

    pub fn chunk_sizes(&self) -> &[u64] {
        &self.chunk_sizes
    }

    /// Number of scheduling steps.
    pub fn len(&self) -> usize {
        self.chunk_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunk_sizes.is_empty()
    }

    /// Chunk size for `step`, or 0 past the end of the plan.
    pub fn chunk(&self, step: u64) -> u64 {
        usize::try_from(step)
            .ok()
            .and_then(|s| self.chunk_sizes.get(s).copied())
            .unwrap_or(0)
    }

    /// `(step, start, size)` for every chunk in step order.
    pub fn ranges(&self) -> impl Iterator<Item = (u64, u64, u64)> + '_ {
        self.chunk_sizes
            .iter()
            .scan(0u64, |start, &size| {
                let s = *start;
                *start += size;
                Some((s, size))
            })
            .enumerate()
            .map(|(step, (start, size))| (step as u64, start, size))
    }
}

pub fn build_chunk_plan(technique: SchedulingTechnique, total: u64, workers: u64) -> Result<ChunkPlan> {
    let chunk_sizes = ChunkIter::new(technique, total, workers)?.collect();
    Ok(ChunkPlan {
        technique,
        total_iterations: total,
        workers,
        chunk_sizes,
    })
}

/// Chunk consumed at scheduling step `step`, 0 once the plan is exhausted.
pub fn chunk_at_step(technique: SchedulingTechnique, total: u64, workers: u64, step: u64) -> Result<u64> {
    let mut iter = ChunkIter::new(technique, total, workers)?;
    let Ok(step) = usize::try_from(step) else {
        return Ok(0);
    };
    match technique {
        // Closed forms; the iterator is only needed for the recurrences.
        SchedulingTechnique::SelfScheduling => Ok(u64::from((step as u64) < total)),
        _ => Ok(iter.nth(step).unwrap_or(0)),
    }
}
