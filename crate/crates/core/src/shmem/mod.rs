//! Instrumented shared memory and the deterministic scheduler.
//!
//! Algorithms are written as [`ProcessHandle`]s: resumable step machines that
//! perform at most one base-object access per resumption. The same handles run
//! on [`SimMemory`] under a [`Simulation`] (single-threaded, every access
//! charged and optionally traced) or on any other [`Memory`] backend, such as
//! hardware atomics.

mod history;
mod machine;
mod memory;
mod object;
mod sched;

pub use history::{Event, History, HistoryError, Op, OpRecord, OpSteps, Ret, StepReport};
pub(crate) use machine::{drive, expect_pair, expect_word, AccessPlan};
pub use machine::{ObjectError, ProcessHandle, Step};
pub use memory::{Alloc, Memory, ProcessView, SimMemory, TraceEntry, BIT_CHUNK};
pub use object::{Access, AccessError, BitArrayId, Kind, ObjectId, Primitive, Value};
pub use sched::{
    for_each_interleaving, run, Enumeration, Recording, RunOutcome, Schedule, SeededSchedule,
    SimError, Simulation, SlotOutcome, Workload,
};

/// Index of a process, `0..n`.
pub type ProcessId = usize;
