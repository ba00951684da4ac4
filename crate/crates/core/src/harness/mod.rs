//! Experiment orchestration and result analysis.

mod matrix;
mod reference;
mod stats;

pub use matrix::{run_matrix, ExperimentMatrix, KernelSpec, MatrixOutput, Mode};
pub use reference::{
    compare, load_reference, load_results, read_results, write_results, CellKey, ErrorCell, ErrorTable, ReferenceRow,
    ReferenceSeries, ResultRow, Skipped, RESULTS_HEADER,
};
pub use stats::{
    ci_half_width, mean, repeat_until_ci, ExperimentStats, StoppingRule, CI_TARGET, CONFIDENCE_LEVEL, MAX_REPS,
    MIN_REPS,
};

use crate::error::{Error, Result};

/// Processor-seconds: wall time times thread count.
pub fn parallel_cost(wall_time: f64, threads: usize) -> f64 {
    wall_time * threads as f64
}

/// `(1 - t_sim / t_ref) * 100`. Positive when the simulation underestimates.
pub fn percent_error(t_sim: f64, t_ref: f64) -> Result<f64> {
    if t_ref == 0.0 || !t_ref.is_finite() {
        return Err(Error::invalid(format!("reference time must be non-zero, got {t_ref}")));
    }
    Ok((1.0 - t_sim / t_ref) * 100.0)
}
