//! Matrix multiplication (MM) and adjoint convolution with decreasing task
//! sizes (AC-d).
//!
//! Both kernels flatten their parallel loop to `n*n` iterations with 0-based
//! ids. [`KernelCostModel`] gives the simulated work of each iteration and
//! [`KernelProblem`] runs the real arithmetic.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Bytes per matrix element.
pub const ELEMENT_WIDTH: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KernelKind {
    MatMul,
    AdjointConvolution,
}

impl KernelKind {
    pub const ALL: [KernelKind; 2] = [KernelKind::MatMul, KernelKind::AdjointConvolution];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::MatMul => "mm",
            KernelKind::AdjointConvolution => "acd",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mm" => Ok(KernelKind::MatMul),
            "acd" | "ac-d" => Ok(KernelKind::AdjointConvolution),
            other => Err(Error::invalid(format!("unknown kernel '{other}' (expected mm or acd)"))),
        }
    }
}

/// Default MM factor for the RP3 reproduction.
pub const RP3_G1: f64 = 35.0;
/// Default AC-d factor for the RP3 reproduction.
pub const RP3_G2: f64 = 60.0;

/// Analytic per-iteration work and per-chunk data volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelCostModel {
    kind: KernelKind,
    matrix_order: u64,
    g1: f64,
    g2: f64,
}

impl KernelCostModel {
    pub fn new(kind: KernelKind, matrix_order: u64, g1: f64, g2: f64) -> Result<Self> {
        if matrix_order == 0 {
            return Err(Error::invalid("matrix order must be at least 1"));
        }
        if !(g1 > 0.0 && g1.is_finite()) || !(g2 > 0.0 && g2.is_finite()) {
            return Err(Error::invalid(format!("calibration factors must be positive (g1={g1}, g2={g2})")));
        }
        Ok(KernelCostModel {
            kind,
            matrix_order,
            g1,
            g2,
        })
    }

    /// Model with the RP3 factors g1 = 35, g2 = 60.
    pub fn rp3(kind: KernelKind, matrix_order: u64) -> Result<Self> {
        Self::new(kind, matrix_order, RP3_G1, RP3_G2)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn matrix_order(&self) -> u64 {
        self.matrix_order
    }

    pub fn row_length(&self) -> u64 {
        self.matrix_order
    }

    pub fn total_iterations(&self) -> u64 {
        self.matrix_order * self.matrix_order
    }

    /// Work of one iteration in FLOP.
    ///
    /// MM costs `g1 * (5 + 2n)` for every iteration. AC-d costs
    /// `g2 * 3 * (n*n - id)`, so the last iteration costs `3 * g2`.
    pub fn iteration_flop(&self, iteration_id: u64) -> Result<f64> {
        let total = self.total_iterations();
        if iteration_id >= total {
            return Err(Error::invalid(format!(
                "iteration id {iteration_id} out of range for {total} iterations"
            )));
        }
        Ok(self.flop_unchecked(iteration_id))
    }

    pub(crate) fn flop_unchecked(&self, iteration_id: u64) -> f64 {
        match self.kind {
            KernelKind::MatMul => self.g1 * (5.0 + 2.0 * self.row_length() as f64),
            KernelKind::AdjointConvolution => {
                self.g2 * 3.0 * (self.total_iterations() - iteration_id) as f64
            }
        }
    }

    /// Bytes moved to hand out a chunk: one matrix column per iteration.
    pub fn chunk_comm_bytes(&self, chunk_size: u64) -> u64 {
        chunk_size * self.row_length() * ELEMENT_WIDTH
    }
}

/// Output buffer shared by workers that write disjoint index ranges.
///
/// Elements are stored as `f64` bit patterns in relaxed atomics, which keeps
/// concurrent disjoint writes safe without locks.
#[derive(Debug)]
pub struct SharedOutput {
    cells: Vec<AtomicU64>,
}

impl SharedOutput {
    pub fn zeroed(len: usize) -> Self {
        SharedOutput {
            cells: (0..len).map(|_| AtomicU64::new(0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    fn store(&self, index: usize, value: f64) {
        self.cells[index].store(value.to_bits(), Ordering::Relaxed);
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.cells
            .iter()
            .map(|c| f64::from_bits(c.load(Ordering::Relaxed)))
            .collect()
    }
}

/// Concrete kernel inputs. `a` and `b` are row-major `n x n` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelProblem {
    kind: KernelKind,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    constant: f64,
}

impl KernelProblem {
    pub fn new(kind: KernelKind, n: usize, a: Vec<f64>, b: Vec<f64>, constant: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("matrix order must be at least 1"));
        }
        let len = n
            .checked_mul(n)
            .ok_or_else(|| Error::invalid(format!("matrix order {n} overflows")))?;
        if a.len() != len || b.len() != len {
            return Err(Error::invalid(format!(
                "input matrices must have {len} elements (got {} and {})",
                a.len(),
                b.len()
            )));
        }
        Ok(KernelProblem {
            kind,
            n,
            a,
            b,
            constant,
        })
    }

    /// Inputs drawn uniformly from `[-1, 1)` with a seeded generator.
    pub fn random(kind: KernelKind, n: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = n * n;
        let a = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self::new(kind, n, a, b, 1.0)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn total_iterations(&self) -> u64 {
        (self.n * self.n) as u64
    }

    pub fn new_output(&self) -> SharedOutput {
        SharedOutput::zeroed(self.n * self.n)
    }

    #[inline]
    fn iteration(&self, k: usize) -> f64 {
        let n = self.n;
        match self.kind {
            KernelKind::MatMul => {
                let (i, j) = (k / n, k % n);
                let row = &self.a[i * n..(i + 1) * n];
                let mut acc = 0.0;
                for (l, &a) in row.iter().enumerate() {
                    acc += a * self.b[l * n + j];
                }
                acc
            }
            KernelKind::AdjointConvolution => {
                let mut acc = 0.0;
                for (a, b) in self.a[k..].iter().zip(&self.b) {
                    acc += self.constant * a * b;
                }
                acc
            }
        }
    }

    /// Runs iterations `[start, start + chunk_size)` and writes their results
    /// into `out`. Callers guarantee no other worker covers the same range.
    pub fn execute_chunk(&self, start: u64, chunk_size: u64, out: &SharedOutput) -> Result<()> {
        let total = self.total_iterations();
        let end = start
            .checked_add(chunk_size)
            .filter(|&e| e <= total)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "chunk [{start}, {start}+{chunk_size}) exceeds {total} iterations"
                ))
            })?;
        if out.len() as u64 != total {
            return Err(Error::invalid("output buffer has the wrong length"));
        }
        for k in start as usize..end as usize {
            out.store(k, self.iteration(k));
        }
        Ok(())
    }

    /// Single-threaded evaluation of the whole iteration space.
    pub fn serial_reference(&self) -> Vec<f64> {
        (0..self.n * self.n).map(|k| self.iteration(k)).collect()
    }
}

/// Largest element-wise relative difference, with the denominator floored at
/// 1 so exact zeros compare absolutely.
pub fn max_relative_difference(got: &[f64], want: &[f64]) -> f64 {
    assert_eq!(got.len(), want.len());
    got.iter()
        .zip(want)
        .map(|(g, w)| (g - w).abs() / w.abs().max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        m
    }

    #[test]
    fn mm_flop_is_constant() {
        let m = KernelCostModel::rp3(KernelKind::MatMul, 300).unwrap();
        assert_eq!(m.iteration_flop(0).unwrap(), 21_175.0);
        assert_eq!(m.iteration_flop(89_999).unwrap(), 21_175.0);
    }

    #[test]
    fn acd_flop_examples() {
        let m = KernelCostModel::rp3(KernelKind::AdjointConvolution, 75).unwrap();
        assert_eq!(m.iteration_flop(0).unwrap(), 1_012_500.0);
        assert_eq!(m.iteration_flop(5624).unwrap(), 180.0);
        assert!(m.iteration_flop(5625).is_err());
    }

    #[test]
    fn acd_total_matches_closed_form() {
        let m = KernelCostModel::new(KernelKind::AdjointConvolution, 20, 1.0, 7.0).unwrap();
        let total = m.total_iterations();
        let sum: f64 = (0..total).map(|k| m.iteration_flop(k).unwrap()).sum();
        let closed = 7.0 * 3.0 * (total * (total + 1) / 2) as f64;
        assert_eq!(sum, closed);
        assert!((1..total).all(|k| m.flop_unchecked(k) < m.flop_unchecked(k - 1)));
    }

    #[test]
    fn comm_bytes() {
        let m = KernelCostModel::rp3(KernelKind::MatMul, 300).unwrap();
        assert_eq!(m.chunk_comm_bytes(25), 60_000);
        assert_eq!(m.chunk_comm_bytes(0), 0);
        let m = KernelCostModel::rp3(KernelKind::AdjointConvolution, 75).unwrap();
        assert_eq!(m.chunk_comm_bytes(1), 600);
    }

    #[test]
    fn rejects_bad_model() {
        assert!(KernelCostModel::new(KernelKind::MatMul, 0, 1.0, 1.0).is_err());
        assert!(KernelCostModel::new(KernelKind::MatMul, 4, 0.0, 1.0).is_err());
        assert!(KernelCostModel::new(KernelKind::MatMul, 4, 1.0, -2.0).is_err());
    }

    #[test]
    fn mm_identity() {
        let p = KernelProblem::new(KernelKind::MatMul, 4, identity(4), identity(4), 1.0).unwrap();
        assert_eq!(p.serial_reference(), identity(4));
        let out = p.new_output();
        p.execute_chunk(0, 16, &out).unwrap();
        assert_eq!(out.to_vec(), identity(4));
    }

    #[test]
    fn acd_all_ones() {
        let p = KernelProblem::new(KernelKind::AdjointConvolution, 2, vec![1.0; 4], vec![1.0; 4], 1.0).unwrap();
        assert_eq!(p.serial_reference(), vec![4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn mm_matches_triple_loop() {
        let n = 3;
        let p = KernelProblem::random(KernelKind::MatMul, n, 11).unwrap();
        let mut c = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    c[i * n + j] += p.a[i * n + l] * p.b[l * n + j];
                }
            }
        }
        let out = p.new_output();
        for (start, size) in [(0, 2), (2, 5), (7, 2)] {
            p.execute_chunk(start, size, &out).unwrap();
        }
        assert!(max_relative_difference(&out.to_vec(), &c) <= 1e-9);
    }

    #[test]
    fn out_of_range_chunk() {
        let p = KernelProblem::random(KernelKind::AdjointConvolution, 3, 1).unwrap();
        let out = p.new_output();
        assert!(p.execute_chunk(8, 2, &out).is_err());
        assert!(p.execute_chunk(u64::MAX, 2, &out).is_err());
        p.execute_chunk(9, 0, &out).unwrap();
    }

    #[test]
    fn partition_invariance() {
        use crate::sched::{build_chunk_plan, SchedulingTechnique};
        for kind in KernelKind::ALL {
            let p = KernelProblem::random(kind, 9, 5).unwrap();
            let reference = p.serial_reference();
            for t in SchedulingTechnique::ALL {
                let plan = build_chunk_plan(t, p.total_iterations(), 4).unwrap();
                let out = p.new_output();
                let mut ranges: Vec<_> = plan.ranges().collect();
                ranges.reverse();
                for (_, start, size) in ranges {
                    p.execute_chunk(start, size, &out).unwrap();
                }
                assert!(max_relative_difference(&out.to_vec(), &reference) <= 1e-9);
            }
        }
    }
}
