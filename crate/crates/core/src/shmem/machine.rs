use super::history::{Op, Ret};
use super::memory::Memory;
use super::object::{Access, AccessError, Value};

/// Outcome of resuming an in-flight operation.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Step {
    Pending,
    Done(Ret),
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ObjectError {
    #[error("operation {0} is not supported by this object")]
    UnsupportedOp(Op),
    #[error("value {value} outside [{min}, {max}]")]
    OutOfRange { value: u128, min: u128, max: u128 },
    #[error("integer overflow computing {0}")]
    Overflow(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("an operation is already in flight")]
    Busy,
    #[error("no operation in flight")]
    Idle,
    #[error("unexpected value {0} from base object")]
    UnexpectedValue(Value),
    #[error(transparent)]
    Access(#[from] AccessError),
}

/// A process of a shared object: its persistent local state plus at most one
/// in-flight operation in step-machine form.
///
/// Each call to [`resume`](ProcessHandle::resume) performs at most one
/// base-object access followed by local computation. Local computation is free.
pub trait ProcessHandle {
    fn begin(&mut self, op: Op) -> Result<(), ObjectError>;

    fn resume(&mut self, mem: &mut dyn Memory) -> Result<Step, ObjectError>;

    fn is_idle(&self) -> bool;

    /// Runs `op` to completion without interleaving.
    fn run_solo(&mut self, op: Op, mem: &mut dyn Memory) -> Result<Ret, ObjectError> {
        self.begin(op)?;
        loop {
            if let Step::Done(ret) = self.resume(mem)? {
                return Ok(ret);
            }
        }
    }
}

/// Operation logic expressed as a sequence of base-object accesses.
pub(crate) trait AccessPlan {
    /// Runs local computation up to the next access and returns it, or `None`
    /// once the operation has nothing left to access. Calling it again without
    /// an intervening [`observe`](AccessPlan::observe) returns the same access.
    fn next_access(&mut self) -> Result<Option<Access>, ObjectError>;

    fn observe(&mut self, result: Option<Value>) -> Result<(), ObjectError>;

    /// Takes the response of a completed operation and returns the process to idle.
    fn finish(&mut self) -> Ret;
}

/// One resumption: a single access, then local computation up to the next
/// access or completion.
pub(crate) fn drive<P: AccessPlan + ?Sized>(
    plan: &mut P,
    mem: &mut dyn Memory,
) -> Result<Step, ObjectError> {
    let Some(access) = plan.next_access()? else {
        return Ok(Step::Done(plan.finish()));
    };
    let result = mem.access(access)?;
    plan.observe(result)?;
    Ok(match plan.next_access()? {
        None => Step::Done(plan.finish()),
        Some(_) => Step::Pending,
    })
}

pub(crate) fn expect_word(v: Option<Value>) -> Result<u64, ObjectError> {
    match v {
        Some(Value::Word(w)) => Ok(w),
        Some(other) => Err(ObjectError::UnexpectedValue(other)),
        None => Ok(0),
    }
}

pub(crate) fn expect_pair(v: Option<Value>) -> Result<(u64, u64), ObjectError> {
    match v {
        Some(Value::Pair(a, b)) => Ok((a, b)),
        Some(other) => Err(ObjectError::UnexpectedValue(other)),
        None => Ok((0, 0)),
    }
}
