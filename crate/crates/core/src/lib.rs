//! Loop self-scheduling laboratory.
//!
//! The crate is organised around the life cycle of a scheduling experiment:
//!
//! * [`sched`] computes the chunk sequence of STATIC, SS, GSS and FAC.
//! * [`kernels`] provides the matrix-multiplication and decreasing-size
//!   adjoint-convolution workloads, both as FLOP cost models and as real
//!   numeric code.
//! * [`sim`] is a deterministic discrete-event simulator of a set of hosts
//!   claiming chunks from a shared pool.
//! * [`native`] runs the same schedules on real threads with two atomic
//!   counters.
//! * [`calibration`] measures machine costs and turns them into FLOP so the
//!   simulator can predict native runs.
//! * [`harness`] repeats measurements until a confidence target is met,
//!   computes parallel cost and percent error, and sweeps experiment matrices.

pub mod calibration;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod keyvalue;
pub mod native;
pub mod sched;
pub mod sim;

pub use error::{Error, Result};
pub use kernels::{KernelCostModel, KernelKind, KernelProblem};
pub use sched::{build_chunk_plan, chunk_at_step, ChunkPlan, SchedulingTechnique};
