use alloc::sync::Arc;
use alloc::vec::Vec;
use core::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::history::{Event, History, Op, OpSteps, Ret, StepReport};
use super::machine::{ObjectError, ProcessHandle, Step};
use super::memory::SimMemory;
use super::ProcessId;

/// Per-process operation lists, run in order.
pub type Workload = Vec<Vec<Op>>;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("schedule names process {process} but only {n} exist")]
    UnknownProcess { process: ProcessId, n: usize },
    #[error("{procs} processes but workload has {workload} entries")]
    ProcessCount { procs: usize, workload: usize },
    #[error("process {process}: {source}")]
    Object {
        process: ProcessId,
        #[source]
        source: ObjectError,
    },
    #[error("process {process} performed {accesses} accesses in one resumption")]
    MultipleAccesses { process: ProcessId, accesses: u32 },
}

/// What one schedule slot did.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum SlotOutcome {
    /// The process had nothing to run; recorded as a no-op.
    Skipped,
    Stepped {
        op_id: usize,
        accesses: u32,
        response: Option<Ret>,
    },
}

/// What the simulation keeps for later inspection.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Recording {
    pub history: bool,
    pub trace: bool,
}

impl Default for Recording {
    fn default() -> Self {
        Recording {
            history: true,
            trace: false,
        }
    }
}

/// Deterministic single-threaded execution of `n` processes over a
/// [`SimMemory`]. Each slot resumes one process for at most one base access;
/// an idle process first invokes its next operation in the same slot.
#[derive(Clone, Debug)]
pub struct Simulation<P> {
    mem: SimMemory,
    procs: Vec<P>,
    workload: Arc<Workload>,
    cursor: Vec<usize>,
    in_flight: Vec<Option<usize>>,
    history: Option<History>,
    per_op: Vec<OpSteps>,
    completed: u64,
    slots: u64,
    skipped: Vec<u64>,
}

/// Result of a finished or abandoned run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub history: History,
    pub report: StepReport,
    /// Slot indices that were no-ops.
    pub skipped: Vec<u64>,
    pub memory: SimMemory,
}

impl<P: ProcessHandle> Simulation<P> {
    pub fn new(mem: SimMemory, procs: Vec<P>, workload: Workload) -> Result<Self, SimError> {
        Self::with_recording(mem, procs, workload, Recording::default())
    }

    pub fn with_recording(
        mem: SimMemory,
        procs: Vec<P>,
        workload: Workload,
        recording: Recording,
    ) -> Result<Self, SimError> {
        if procs.len() != workload.len() {
            return Err(SimError::ProcessCount {
                procs: procs.len(),
                workload: workload.len(),
            });
        }
        let n = procs.len();
        let mem = if recording.trace && mem.trace().is_none() {
            mem.with_trace()
        } else {
            mem
        };
        Ok(Simulation {
            mem,
            procs,
            workload: Arc::new(workload),
            cursor: alloc::vec![0; n],
            in_flight: alloc::vec![None; n],
            history: recording.history.then(History::new),
            per_op: Vec::new(),
            completed: 0,
            slots: 0,
            skipped: Vec::new(),
        })
    }

    pub fn process_count(&self) -> usize {
        self.procs.len()
    }

    /// `process` has an operation in flight or one left to invoke.
    pub fn is_enabled(&self, process: ProcessId) -> bool {
        self.in_flight[process].is_some() || self.cursor[process] < self.workload[process].len()
    }

    pub fn enabled(&self) -> impl Iterator<Item = ProcessId> + '_ {
        (0..self.procs.len()).filter(|&p| self.is_enabled(p))
    }

    pub fn is_finished(&self) -> bool {
        (0..self.procs.len()).all(|p| !self.is_enabled(p))
    }

    /// Runs one schedule slot for `process`.
    pub fn step(&mut self, process: ProcessId) -> Result<SlotOutcome, SimError> {
        let n = self.procs.len();
        if process >= n {
            return Err(SimError::UnknownProcess { process, n });
        }
        let slot = self.slots;
        self.slots += 1;
        let op_id = match self.in_flight[process] {
            Some(id) => id,
            None => {
                let Some(&op) = self.workload[process].get(self.cursor[process]) else {
                    self.skipped.push(slot);
                    return Ok(SlotOutcome::Skipped);
                };
                self.cursor[process] += 1;
                self.procs[process]
                    .begin(op)
                    .map_err(|source| SimError::Object { process, source })?;
                let id = self.per_op.len();
                self.per_op.push(OpSteps {
                    process,
                    op,
                    steps: 0,
                    complete: false,
                });
                self.in_flight[process] = Some(id);
                if let Some(h) = &mut self.history {
                    h.push(Event::Invoke {
                        process,
                        op,
                        step: self.mem.total_steps(),
                    });
                }
                id
            }
        };

        let mut view = self.mem.as_process(process);
        let step = self.procs[process].resume(&mut view);
        let accesses = view.accesses();
        let step = step.map_err(|source| SimError::Object { process, source })?;
        if accesses > 1 {
            return Err(SimError::MultipleAccesses { process, accesses });
        }
        self.per_op[op_id].steps += u64::from(accesses);

        let response = match step {
            Step::Pending => None,
            Step::Done(ret) => {
                let rec = &mut self.per_op[op_id];
                rec.complete = true;
                self.in_flight[process] = None;
                self.completed += 1;
                if let Some(h) = &mut self.history {
                    h.push(Event::Respond {
                        process,
                        op: rec.op,
                        ret,
                        step: self.mem.total_steps(),
                    });
                }
                Some(ret)
            }
        };
        Ok(SlotOutcome::Stepped {
            op_id,
            accesses,
            response,
        })
    }

    pub fn memory(&self) -> &SimMemory {
        &self.mem
    }

    pub fn process(&self, process: ProcessId) -> &P {
        &self.procs[process]
    }

    /// Recorded history; empty when history recording is off.
    pub fn history(&self) -> History {
        self.history.clone().unwrap_or_default()
    }

    pub fn invoked_ops(&self) -> u64 {
        self.per_op.len() as u64
    }

    pub fn completed_ops(&self) -> u64 {
        self.completed
    }

    pub fn total_steps(&self) -> u64 {
        self.mem.total_steps()
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn op_steps(&self) -> &[OpSteps] {
        &self.per_op
    }

    pub fn report(&self) -> StepReport {
        StepReport {
            per_op: self.per_op.clone(),
            per_process: (0..self.procs.len())
                .map(|p| self.mem.steps_of(p))
                .collect(),
            total_steps: self.mem.total_steps(),
        }
    }

    pub fn finish(self) -> RunOutcome {
        let report = self.report();
        RunOutcome {
            history: self.history.unwrap_or_default(),
            report,
            skipped: self.skipped,
            memory: self.mem,
        }
    }
}

/// Seeded uniform stream of process ids in `0..n`.
#[derive(Clone, Debug)]
pub struct SeededSchedule {
    rng: ChaCha8Rng,
    n: usize,
}

impl SeededSchedule {
    pub fn new(seed: u64, n: usize) -> Self {
        assert!(n > 0, "schedule over zero processes");
        SeededSchedule {
            rng: ChaCha8Rng::seed_from_u64(seed),
            n,
        }
    }
}

impl Iterator for SeededSchedule {
    type Item = ProcessId;

    fn next(&mut self) -> Option<ProcessId> {
        Some(self.rng.gen_range(0..self.n))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// Exactly these slots, then stop (operations may remain pending).
    Explicit(Vec<ProcessId>),
    /// Uniformly random slots from a seed until every process is done.
    Seeded(u64),
}

/// Runs `sim` under `schedule` and returns the history and step accounting.
pub fn run<P: ProcessHandle>(
    mut sim: Simulation<P>,
    schedule: &Schedule,
) -> Result<RunOutcome, SimError> {
    match schedule {
        Schedule::Explicit(slots) => {
            let n = sim.process_count();
            if let Some(&process) = slots.iter().find(|&&p| p >= n) {
                return Err(SimError::UnknownProcess { process, n });
            }
            for &p in slots {
                sim.step(p)?;
            }
        }
        Schedule::Seeded(seed) => {
            if sim.process_count() > 0 {
                let mut slots = SeededSchedule::new(*seed, sim.process_count());
                while !sim.is_finished() {
                    let p = slots.next().expect("infinite schedule");
                    sim.step(p)?;
                }
            }
        }
    }
    Ok(sim.finish())
}

/// Counts reported by [`for_each_interleaving`].
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub struct Enumeration {
    /// Maximal interleavings visited.
    pub complete: u64,
    /// Interleavings cut off by the depth bound.
    pub truncated: u64,
}

/// Visits every interleaving of the enabled processes exactly once, by
/// depth-first search over slot choices. `depth_bound` limits the number of
/// slots per interleaving; interleavings that hit it are visited too, with
/// `is_finished() == false`. The count grows like a multinomial coefficient
/// in the per-process slot counts, so keep workloads tiny.
pub fn for_each_interleaving<P, F>(
    sim: Simulation<P>,
    depth_bound: usize,
    mut visit: F,
) -> Result<Enumeration, SimError>
where
    P: ProcessHandle + Clone,
    F: FnMut(&Simulation<P>) -> ControlFlow<()>,
{
    let mut stats = Enumeration::default();
    let _ = explore(sim, depth_bound, &mut visit, &mut stats)?;
    Ok(stats)
}

fn explore<P, F>(
    sim: Simulation<P>,
    remaining: usize,
    visit: &mut F,
    stats: &mut Enumeration,
) -> Result<ControlFlow<()>, SimError>
where
    P: ProcessHandle + Clone,
    F: FnMut(&Simulation<P>) -> ControlFlow<()>,
{
    let enabled: Vec<ProcessId> = sim.enabled().collect();
    if enabled.is_empty() || remaining == 0 {
        if enabled.is_empty() {
            stats.complete += 1;
        } else {
            stats.truncated += 1;
        }
        return Ok(visit(&sim));
    }
    let last = enabled.len() - 1;
    let mut sim = Some(sim);
    for (i, &p) in enabled.iter().enumerate() {
        let mut child = if i == last {
            sim.take().expect("last child")
        } else {
            sim.as_ref().expect("parent").clone()
        };
        child.step(p)?;
        if explore(child, remaining - 1, visit, stats)?.is_break() {
            return Ok(ControlFlow::Break(()));
        }
    }
    Ok(ControlFlow::Continue(()))
}
