//! Exact wait-free m-bounded max register from read/write registers.
//!
//! A register of capacity `M > 1` is a switch bit plus two sub-registers: the
//! left one holds values in `[0, ceil(M/2))`, the right one holds the rest,
//! shifted down by `ceil(M/2)`. A write of a large value goes right and then
//! sets the switch; a write of a small value first reads the switch and only
//! descends left while it is still 0. A read follows the switches down to a
//! leaf. Both operations touch one switch per level, so at most
//! `ceil(log2 M)` base objects.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::shmem::{
    drive, expect_word, Access, AccessPlan, Alloc, Kind, Memory, ObjectError, ObjectId, Op,
    ProcessHandle, Ret, Step, Value,
};

/// Largest capacity whose tree is allocated.
pub const MAX_CAPACITY: u64 = 1 << 22;

#[derive(Clone, Debug)]
struct Node {
    capacity: u64,
    switch: Option<ObjectId>,
    left: u32,
    right: u32,
}

impl Node {
    fn half(&self) -> u64 {
        self.capacity.div_ceil(2)
    }
}

/// Shared layout of an exact max register holding values in `[0, capacity)`.
#[derive(Clone, Debug)]
pub struct MaxRegister {
    nodes: Arc<Vec<Node>>,
}

impl MaxRegister {
    pub fn new(mem: &mut dyn Alloc, capacity: u64) -> Result<Self, ObjectError> {
        if capacity == 0 {
            return Err(ObjectError::InvalidParameter(
                "max register capacity must be positive",
            ));
        }
        if capacity > MAX_CAPACITY {
            return Err(ObjectError::InvalidParameter(
                "max register capacity too large to allocate",
            ));
        }
        let mut nodes = Vec::with_capacity((2 * capacity - 1) as usize);
        build(&mut nodes, mem, capacity)?;
        Ok(MaxRegister {
            nodes: Arc::new(nodes),
        })
    }

    pub fn capacity(&self) -> u64 {
        self.nodes[0].capacity
    }

    /// Tree depth, `ceil(log2 capacity)`.
    pub fn depth(&self) -> u32 {
        ceil_log2(self.capacity())
    }

    /// Switch registers in allocation order (root first, depth-first).
    pub fn switches(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.nodes.iter().filter_map(|n| n.switch)
    }

    pub fn process(&self) -> MaxRegProcess {
        MaxRegProcess {
            reg: self.clone(),
            phase: Phase::Idle,
        }
    }
}

fn build(nodes: &mut Vec<Node>, mem: &mut dyn Alloc, capacity: u64) -> Result<u32, ObjectError> {
    let idx = nodes.len();
    nodes.push(Node {
        capacity,
        switch: None,
        left: 0,
        right: 0,
    });
    if capacity > 1 {
        let switch = mem.alloc(Kind::Register, Value::Word(0))?;
        let left = build(nodes, mem, capacity.div_ceil(2))?;
        let right = build(nodes, mem, capacity / 2)?;
        nodes[idx] = Node {
            capacity,
            switch: Some(switch),
            left,
            right,
        };
    }
    Ok(idx as u32)
}

pub(crate) fn ceil_log2(x: u64) -> u32 {
    if x <= 1 {
        0
    } else {
        u64::BITS - (x - 1).leading_zeros()
    }
}

#[derive(Clone, Debug)]
enum Phase {
    Idle,
    Write {
        node: u32,
        value: u64,
        descending: bool,
        // switches still to set, deepest last
        to_set: Vec<ObjectId>,
    },
    Read {
        node: u32,
        acc: u64,
    },
}

/// One process's view of a [`MaxRegister`]: supports `Write(v)` and `Read`.
#[derive(Clone, Debug)]
pub struct MaxRegProcess {
    reg: MaxRegister,
    phase: Phase,
}

impl MaxRegProcess {
    pub fn capacity(&self) -> u64 {
        self.reg.capacity()
    }
}

impl AccessPlan for MaxRegProcess {
    fn next_access(&mut self) -> Result<Option<Access>, ObjectError> {
        let nodes = &self.reg.nodes;
        Ok(match &mut self.phase {
            Phase::Idle => None,
            Phase::Write {
                node,
                value,
                descending,
                to_set,
            } => {
                while *descending {
                    let n = &nodes[*node as usize];
                    let Some(switch) = n.switch else {
                        *descending = false;
                        break;
                    };
                    if *value >= n.half() {
                        to_set.push(switch);
                        *value -= n.half();
                        *node = n.right;
                    } else {
                        return Ok(Some(Access::read(switch)));
                    }
                }
                to_set.last().map(|&s| Access::write(s, Value::Word(1)))
            }
            Phase::Read { node, .. } => nodes[*node as usize].switch.map(Access::read),
        })
    }

    fn observe(&mut self, result: Option<Value>) -> Result<(), ObjectError> {
        let nodes = &self.reg.nodes;
        match &mut self.phase {
            Phase::Idle => return Err(ObjectError::Idle),
            Phase::Write {
                node,
                descending,
                to_set,
                ..
            } => {
                if *descending {
                    if expect_word(result)? == 1 {
                        // dominated by a larger write
                        *descending = false;
                    } else {
                        *node = nodes[*node as usize].left;
                    }
                } else {
                    to_set.pop();
                }
            }
            Phase::Read { node, acc } => {
                let n = &nodes[*node as usize];
                if expect_word(result)? == 1 {
                    *acc += n.half();
                    *node = n.right;
                } else {
                    *node = n.left;
                }
            }
        }
        Ok(())
    }

    fn finish(&mut self) -> Ret {
        match core::mem::replace(&mut self.phase, Phase::Idle) {
            Phase::Read { acc, .. } => Some(u128::from(acc)),
            _ => None,
        }
    }
}

impl ProcessHandle for MaxRegProcess {
    fn begin(&mut self, op: Op) -> Result<(), ObjectError> {
        if !matches!(self.phase, Phase::Idle) {
            return Err(ObjectError::Busy);
        }
        self.phase = match op {
            Op::Write(v) => {
                let cap = self.capacity();
                if v >= cap {
                    return Err(ObjectError::OutOfRange {
                        value: v.into(),
                        min: 0,
                        max: (cap - 1).into(),
                    });
                }
                Phase::Write {
                    node: 0,
                    value: v,
                    descending: true,
                    to_set: Vec::new(),
                }
            }
            Op::Read => Phase::Read { node: 0, acc: 0 },
            Op::Inc => return Err(ObjectError::UnsupportedOp(op)),
        };
        Ok(())
    }

    fn resume(&mut self, mem: &mut dyn Memory) -> Result<Step, ObjectError> {
        if self.is_idle() {
            return Err(ObjectError::Idle);
        }
        drive(self, mem)
    }

    fn is_idle(&self) -> bool {
        matches!(self.phase, Phase::Idle)
    }
}
