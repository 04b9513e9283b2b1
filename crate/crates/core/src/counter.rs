//! Wait-free k-multiplicative-accurate unbounded counter.
//!
//! Shared state is an unbounded sequence of test&set switches and one
//! `(switch index, sequence number)` pair register per process. Switch 0
//! stands for one increment; every switch in the interval `[qk+1, (q+1)k]`
//! stands for `k^(q+1)` increments. A process counts increments locally and,
//! once its local count reaches its current threshold `k^j`, tries to set the
//! next free switch of interval `j - 1`. Readers scan only the first and last
//! switch of each interval and answer `k` times the number of increments the
//! set switches account for. A reader that keeps finding set switches falls
//! back on the pair registers: once some process has published two new
//! switches since the reader started looking, that switch is fresh and the
//! reader returns its value.
//!
//! Reads return `x <= v*k`. The lower end `v/k <= x` is meant to hold for
//! `k * k >= n`, but while only switch 0 is set up to `1 + n(k-1)` increments
//! may be done and a read returns `k`, so it needs `n <= k + 1` there. Smaller
//! `k` is accepted; wait-freedom holds regardless.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::shmem::{
    drive, expect_pair, expect_word, Access, AccessPlan, Alloc, BitArrayId, Kind, Memory,
    ObjectError, ObjectId, Op, ProcessHandle, ProcessId, Ret, Step, Value,
};

#[derive(Debug)]
struct Layout {
    n: usize,
    k: u64,
    switches: BitArrayId,
    announce: Vec<ObjectId>,
}

/// Shared objects of a counter for `n` processes with accuracy `k`.
#[derive(Clone, Debug)]
pub struct Counter {
    layout: Arc<Layout>,
}

impl Counter {
    pub fn new(mem: &mut dyn Alloc, n: usize, k: u64) -> Result<Self, ObjectError> {
        if n == 0 {
            return Err(ObjectError::InvalidParameter(
                "counter needs at least one process",
            ));
        }
        if k < 2 {
            return Err(ObjectError::InvalidParameter(
                "accuracy k must be at least 2",
            ));
        }
        let switches = mem.alloc_bit_array();
        let announce = (0..n)
            .map(|_| mem.alloc(Kind::PairRegister, Value::Pair(0, 0)))
            .collect::<Result<_, _>>()?;
        Ok(Counter {
            layout: Arc::new(Layout {
                n,
                k,
                switches,
                announce,
            }),
        })
    }

    pub fn n(&self) -> usize {
        self.layout.n
    }

    pub fn k(&self) -> u64 {
        self.layout.k
    }

    /// `k * k >= n`, the regime the `[v/k, v*k]` window targets. See the
    /// module docs for the early-execution gap when `n > k + 1`.
    pub fn accuracy_guaranteed(&self) -> bool {
        u128::from(self.layout.k).pow(2) >= self.layout.n as u128
    }

    pub fn switches(&self) -> BitArrayId {
        self.layout.switches
    }

    /// Pair register announcing the switches set by `process`.
    pub fn announce(&self, process: ProcessId) -> ObjectId {
        self.layout.announce[process]
    }

    pub fn process(&self, id: ProcessId) -> CounterProcess {
        assert!(id < self.layout.n, "process {id} out of range");
        CounterProcess {
            layout: self.layout.clone(),
            id,
            local: LocalState::default(),
            op: None,
            last_exit: None,
        }
    }

    pub fn processes(&self) -> Vec<CounterProcess> {
        (0..self.layout.n).map(|p| self.process(p)).collect()
    }
}

/// Value a read returns for the switch `qk + p`:
/// `k * (1 + p*k^(q+1) + sum_{l=1..q} k^(l+1))`.
pub fn return_value(p: u64, q: u64, k: u64) -> Result<u128, ObjectError> {
    const OVERFLOW: ObjectError = ObjectError::Overflow("read return value");
    let k = u128::from(k);
    let pow = |e: u64| -> Result<u128, ObjectError> {
        u32::try_from(e)
            .ok()
            .and_then(|e| k.checked_pow(e))
            .ok_or(OVERFLOW)
    };
    let mut ret = u128::from(p)
        .checked_mul(pow(q + 1)?)
        .and_then(|x| x.checked_add(1))
        .ok_or(OVERFLOW)?;
    for l in 1..=q {
        ret = ret.checked_add(pow(l + 1)?).ok_or(OVERFLOW)?;
    }
    ret.checked_mul(k).ok_or(OVERFLOW)
}

/// Persistent per-process variables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalState {
    /// Increments not yet announced through a switch.
    pub lcounter: u64,
    /// Current threshold, always `k^exponent`.
    pub limit: u64,
    pub exponent: u32,
    /// Switches this process has set.
    pub sn: u64,
    /// Offset within the current interval where the next attempt starts, in `[1, k]`.
    pub l0: u64,
    /// Next switch index this process's reads will look at.
    pub last: u64,
    /// Highest switch index a read of this process saw set.
    pub last_confirmed: Option<u64>,
}

impl Default for LocalState {
    fn default() -> Self {
        LocalState {
            lcounter: 0,
            limit: 1,
            exponent: 0,
            sn: 0,
            l0: 1,
            last: 0,
            last_confirmed: None,
        }
    }
}

/// How the most recent read of a process returned.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ReadExit {
    /// Found a zero switch.
    Scan,
    /// Adopted the announcement of `from` after its sequence number moved by two.
    Helped { from: ProcessId, switch: u64 },
}

#[derive(Clone, Debug)]
enum IncPhase {
    /// test&set on `index`; the attempt range ends at `end`.
    Attempt {
        index: u64,
        end: u64,
    },
    Announce {
        index: u64,
        end: u64,
    },
    Switch0,
    Done,
}

#[derive(Clone, Debug)]
enum ReadPhase {
    Switch,
    Snapshot { j: usize },
    Compare { j: usize },
    Done(u128),
}

#[derive(Clone, Debug)]
enum OpState {
    Inc(IncPhase),
    Read {
        phase: ReadPhase,
        iterations: u64,
        help: Vec<u64>,
    },
}

/// One process of a [`Counter`]: persistent local state plus the in-flight
/// operation. Supports `Inc` and `Read`.
#[derive(Clone, Debug)]
pub struct CounterProcess {
    layout: Arc<Layout>,
    id: ProcessId,
    local: LocalState,
    op: Option<OpState>,
    last_exit: Option<ReadExit>,
}

impl CounterProcess {
    pub fn id(&self) -> ProcessId {
        self.id
    }

    pub fn local(&self) -> &LocalState {
        &self.local
    }

    pub fn last_read_exit(&self) -> Option<ReadExit> {
        self.last_exit
    }

    fn grow_limit(&mut self) -> Result<(), ObjectError> {
        self.local.limit = self
            .local
            .limit
            .checked_mul(self.layout.k)
            .ok_or(ObjectError::Overflow("increment threshold"))?;
        self.local.exponent += 1;
        Ok(())
    }

    /// Skips this process's own announcement slot: its sequence number cannot
    /// move while it is reading.
    fn next_peer(&self, j: usize) -> usize {
        if j == self.id {
            j + 1
        } else {
            j
        }
    }
}

impl AccessPlan for CounterProcess {
    fn next_access(&mut self) -> Result<Option<Access>, ObjectError> {
        let n = self.layout.n;
        let own = self.layout.announce[self.id];
        let switches = self.layout.switches;
        let access = match &mut self.op {
            None => None,
            Some(OpState::Inc(phase)) => match *phase {
                IncPhase::Attempt { index, .. } => Some(Access::test_and_set(switches.bit(index))),
                IncPhase::Announce { index, .. } => {
                    Some(Access::write(own, Value::Pair(index, self.local.sn)))
                }
                IncPhase::Switch0 => Some(Access::test_and_set(switches.bit(0))),
                IncPhase::Done => None,
            },
            Some(OpState::Read { phase, .. }) => {
                if let ReadPhase::Snapshot { j } | ReadPhase::Compare { j } = phase {
                    if *j >= n {
                        *phase = ReadPhase::Switch;
                    }
                }
                match phase {
                    ReadPhase::Switch => Some(Access::read(switches.bit(self.local.last))),
                    ReadPhase::Snapshot { j } | ReadPhase::Compare { j } => {
                        Some(Access::read(self.layout.announce[*j]))
                    }
                    ReadPhase::Done(_) => None,
                }
            }
        };
        Ok(access)
    }

    fn observe(&mut self, result: Option<Value>) -> Result<(), ObjectError> {
        let k = self.layout.k;
        let n = self.layout.n as u64;
        match self.op.take().ok_or(ObjectError::Idle)? {
            OpState::Inc(phase) => {
                let next = match phase {
                    IncPhase::Attempt { index, end } => {
                        if expect_word(result)? == 0 {
                            self.local.sn += 1;
                            IncPhase::Announce { index, end }
                        } else if index < end {
                            IncPhase::Attempt {
                                index: index + 1,
                                end,
                            }
                        } else {
                            self.local.l0 = 1;
                            self.grow_limit()?;
                            IncPhase::Done
                        }
                    }
                    IncPhase::Announce { index, end } => {
                        self.local.lcounter = 0;
                        if index == end {
                            self.grow_limit()?;
                        }
                        self.local.l0 = 1 + index % k;
                        IncPhase::Done
                    }
                    IncPhase::Switch0 => {
                        if expect_word(result)? == 0 {
                            self.local.lcounter = 0;
                        }
                        self.grow_limit()?;
                        IncPhase::Done
                    }
                    IncPhase::Done => return Err(ObjectError::Idle),
                };
                self.op = Some(OpState::Inc(next));
            }
            OpState::Read {
                phase,
                mut iterations,
                mut help,
            } => {
                let phase = match phase {
                    ReadPhase::Switch => {
                        if expect_word(result)? == 0 {
                            self.last_exit = Some(ReadExit::Scan);
                            match self.local.last_confirmed {
                                None => ReadPhase::Done(0),
                                Some(h) => ReadPhase::Done(return_value(h % k, h / k, k)?),
                            }
                        } else {
                            let last = self.local.last;
                            self.local.last_confirmed = Some(last);
                            self.local.last = if last.is_multiple_of(k) {
                                last + 1
                            } else {
                                last + k - 1
                            };
                            iterations += 1;
                            if iterations % n != 0 {
                                ReadPhase::Switch
                            } else if iterations == n {
                                ReadPhase::Snapshot {
                                    j: self.next_peer(0),
                                }
                            } else {
                                ReadPhase::Compare {
                                    j: self.next_peer(0),
                                }
                            }
                        }
                    }
                    ReadPhase::Snapshot { j } => {
                        help[j] = expect_pair(result)?.1;
                        ReadPhase::Snapshot {
                            j: self.next_peer(j + 1),
                        }
                    }
                    ReadPhase::Compare { j } => {
                        let (val, sn) = expect_pair(result)?;
                        if sn >= help[j].saturating_add(2) {
                            self.last_exit = Some(ReadExit::Helped {
                                from: j,
                                switch: val,
                            });
                            ReadPhase::Done(return_value(val % k, val / k, k)?)
                        } else {
                            ReadPhase::Compare {
                                j: self.next_peer(j + 1),
                            }
                        }
                    }
                    ReadPhase::Done(_) => return Err(ObjectError::Idle),
                };
                self.op = Some(OpState::Read {
                    phase,
                    iterations,
                    help,
                });
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Ret {
        match self.op.take() {
            Some(OpState::Read {
                phase: ReadPhase::Done(x),
                ..
            }) => Some(x),
            _ => None,
        }
    }
}

impl ProcessHandle for CounterProcess {
    fn begin(&mut self, op: Op) -> Result<(), ObjectError> {
        if self.op.is_some() {
            return Err(ObjectError::Busy);
        }
        let k = self.layout.k;
        self.op = Some(match op {
            Op::Inc => {
                let s = &mut self.local;
                s.lcounter += 1;
                let phase = if s.lcounter != s.limit {
                    IncPhase::Done
                } else if s.exponent > 0 {
                    let j = u64::from(s.exponent);
                    IncPhase::Attempt {
                        index: (j - 1) * k + s.l0,
                        end: j * k,
                    }
                } else {
                    IncPhase::Switch0
                };
                OpState::Inc(phase)
            }
            Op::Read => OpState::Read {
                phase: ReadPhase::Switch,
                iterations: 0,
                help: alloc::vec![0; self.layout.n],
            },
            Op::Write(_) => return Err(ObjectError::UnsupportedOp(op)),
        });
        Ok(())
    }

    fn resume(&mut self, mem: &mut dyn Memory) -> Result<Step, ObjectError> {
        if self.op.is_none() {
            return Err(ObjectError::Idle);
        }
        drive(self, mem)
    }

    fn is_idle(&self) -> bool {
        self.op.is_none()
    }
}
