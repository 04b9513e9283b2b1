use alloc::vec::Vec;
use core::fmt;

use super::ProcessId;

/// High-level operation invoked on a shared object.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Inc,
    Read,
    Write(u64),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Inc => "inc",
            Op::Read => "read",
            Op::Write(_) => "write",
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Write(v) => write!(f, "write({v})"),
            op => f.write_str(op.name()),
        }
    }
}

/// Response of an operation: `Some(x)` for reads, `None` for updates.
pub type Ret = Option<u128>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Event {
    Invoke {
        process: ProcessId,
        op: Op,
        step: u64,
    },
    Respond {
        process: ProcessId,
        op: Op,
        ret: Ret,
        step: u64,
    },
}

impl Event {
    pub fn process(&self) -> ProcessId {
        match self {
            Event::Invoke { process, .. } | Event::Respond { process, .. } => *process,
        }
    }

    /// Global step index at which the event happened.
    pub fn step(&self) -> u64 {
        match self {
            Event::Invoke { step, .. } | Event::Respond { step, .. } => *step,
        }
    }
}

/// An operation extracted from a history: where it was invoked and, if it
/// completed, where it responded and with what.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct OpRecord {
    pub process: ProcessId,
    pub op: Op,
    pub invoke: usize,
    pub respond: Option<(usize, Ret)>,
}

impl OpRecord {
    pub fn is_complete(&self) -> bool {
        self.respond.is_some()
    }

    /// `self` responded before `other` was invoked.
    pub fn precedes(&self, other: &OpRecord) -> bool {
        self.respond.is_some_and(|(r, _)| r < other.invoke)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum HistoryError {
    #[error("event {index}: process {process} responds without a pending invocation")]
    UnmatchedResponse { index: usize, process: ProcessId },
    #[error("event {index}: process {process} invokes while an operation is pending")]
    OverlappingInvoke { index: usize, process: ProcessId },
    #[error("event {index}: response op {got} does not match pending {expected}")]
    MismatchedOp { index: usize, expected: Op, got: Op },
}

/// Totally ordered sequence of invocation and response events.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct History {
    events: Vec<Event>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Pairs invocations with responses, checking that each process
    /// alternates invoke/respond starting with invoke.
    pub fn operations(&self) -> Result<Vec<OpRecord>, HistoryError> {
        let mut ops: Vec<OpRecord> = Vec::new();
        let mut pending: Vec<Option<usize>> = Vec::new();
        for (index, event) in self.events.iter().enumerate() {
            let process = event.process();
            if process >= pending.len() {
                pending.resize(process + 1, None);
            }
            match *event {
                Event::Invoke { op, .. } => {
                    if pending[process].is_some() {
                        return Err(HistoryError::OverlappingInvoke { index, process });
                    }
                    pending[process] = Some(ops.len());
                    ops.push(OpRecord {
                        process,
                        op,
                        invoke: index,
                        respond: None,
                    });
                }
                Event::Respond { op, ret, .. } => {
                    let id = pending[process]
                        .take()
                        .ok_or(HistoryError::UnmatchedResponse { index, process })?;
                    if ops[id].op != op {
                        return Err(HistoryError::MismatchedOp {
                            index,
                            expected: ops[id].op,
                            got: op,
                        });
                    }
                    ops[id].respond = Some((index, ret));
                }
            }
        }
        Ok(ops)
    }

    /// The same history with step indices erased, so that interleavings that
    /// differ only in where base accesses fell compare equal.
    pub fn shape(&self) -> Vec<(bool, ProcessId, Op, Ret)> {
        self.events
            .iter()
            .map(|e| match *e {
                Event::Invoke { process, op, .. } => (true, process, op, None),
                Event::Respond {
                    process, op, ret, ..
                } => (false, process, op, ret),
            })
            .collect()
    }
}

/// Steps charged to one operation.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct OpSteps {
    pub process: ProcessId,
    pub op: Op,
    pub steps: u64,
    pub complete: bool,
}

/// Step accounting for a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepReport {
    /// Indexed by operation id, in invocation order.
    pub per_op: Vec<OpSteps>,
    pub per_process: Vec<u64>,
    pub total_steps: u64,
}

impl StepReport {
    pub fn op_count(&self) -> u64 {
        self.per_op.len() as u64
    }

    /// Amortized steps per operation as the exact fraction
    /// `(total_steps, op_count)`.
    pub fn amortized_ratio(&self) -> (u64, u64) {
        (self.total_steps, self.op_count())
    }

    /// `total_steps / op_count` rounded to the nearest `f64`; 0 for an empty run.
    pub fn amortized(&self) -> f64 {
        match self.op_count() {
            0 => 0.0,
            n => self.total_steps as f64 / n as f64,
        }
    }

    pub fn max_op_steps(&self) -> u64 {
        self.per_op.iter().map(|o| o.steps).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(process: ProcessId, op: Op) -> Event {
        Event::Invoke {
            process,
            op,
            step: 0,
        }
    }

    fn resp(process: ProcessId, op: Op, ret: Ret) -> Event {
        Event::Respond {
            process,
            op,
            ret,
            step: 0,
        }
    }

    #[test]
    fn operations_pair_events() {
        let mut h = History::new();
        h.push(inv(0, Op::Inc));
        h.push(inv(1, Op::Read));
        h.push(resp(0, Op::Inc, None));
        h.push(resp(1, Op::Read, Some(4)));
        h.push(inv(0, Op::Read));
        let ops = h.operations().unwrap();
        assert_eq!(ops.len(), 3);
        assert_eq!(ops[1].respond, Some((3, Some(4))));
        assert!(!ops[2].is_complete());
        assert!(ops[0].precedes(&ops[2]));
        assert!(!ops[0].precedes(&ops[1]));
    }

    #[test]
    fn malformed_histories_rejected() {
        let mut h = History::new();
        h.push(resp(0, Op::Inc, None));
        assert!(matches!(
            h.operations(),
            Err(HistoryError::UnmatchedResponse { .. })
        ));

        let mut h = History::new();
        h.push(inv(0, Op::Inc));
        h.push(inv(0, Op::Read));
        assert!(matches!(
            h.operations(),
            Err(HistoryError::OverlappingInvoke { .. })
        ));

        let mut h = History::new();
        h.push(inv(0, Op::Inc));
        h.push(resp(0, Op::Read, Some(1)));
        assert!(matches!(
            h.operations(),
            Err(HistoryError::MismatchedOp { .. })
        ));
    }

    #[test]
    fn amortized_is_exact_fraction() {
        let report = StepReport {
            per_op: alloc::vec![
                OpSteps {
                    process: 0,
                    op: Op::Inc,
                    steps: 1,
                    complete: true
                },
                OpSteps {
                    process: 0,
                    op: Op::Read,
                    steps: 2,
                    complete: true
                },
            ],
            per_process: alloc::vec![3],
            total_steps: 3,
        };
        let (num, den) = report.amortized_ratio();
        assert_eq!((num, den), (3, 2));
        assert_eq!(report.amortized() * den as f64, num as f64);
    }
}
