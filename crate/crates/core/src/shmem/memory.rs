use alloc::vec::Vec;
use core::fmt;

use super::object::{Access, AccessError, BitArrayId, Kind, ObjectId, Primitive, Value};
use super::ProcessId;

/// Bits per growth chunk of an unbounded test&set array.
pub const BIT_CHUNK: u64 = 64;

/// Applies primitives to base objects on behalf of one process.
///
/// `read` returns the current value, `write` returns `None`, and
/// `test&set` returns the previous bit.
pub trait Memory {
    fn access(&mut self, access: Access) -> Result<Option<Value>, AccessError>;
}

/// Creates base objects. Implemented by every memory backend so that an
/// object's layout is built once and then shared by all of its processes.
pub trait Alloc {
    fn alloc(&mut self, kind: Kind, initial: Value) -> Result<ObjectId, AccessError>;
    fn alloc_bit_array(&mut self) -> BitArrayId;
}

/// One charged step, as written to a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub step: u64,
    pub process: ProcessId,
    pub object: ObjectId,
    pub primitive: Primitive,
    pub result: Option<Value>,
}

impl fmt::Display for TraceEntry {
    /// `step_index\tprocess_id\tobject_id\tprimitive\targ\tresult`, with `-`
    /// standing for an absent argument or result.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}\t",
            self.step,
            self.process,
            self.object,
            self.primitive.name()
        )?;
        match self.primitive.argument() {
            Some(v) => write!(f, "{v}\t")?,
            None => f.write_str("-\t")?,
        }
        match self.result {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("-"),
        }
    }
}

#[derive(Clone, Debug, Default)]
struct BitStore {
    chunks: Vec<u64>,
}

impl BitStore {
    fn get(&self, index: u64) -> bool {
        let chunk = (index / BIT_CHUNK) as usize;
        self.chunks
            .get(chunk)
            .is_some_and(|c| c >> (index % BIT_CHUNK) & 1 == 1)
    }

    fn set(&mut self, index: u64) -> bool {
        let chunk = (index / BIT_CHUNK) as usize;
        if chunk >= self.chunks.len() {
            self.chunks.resize(chunk + 1, 0);
        }
        let mask = 1u64 << (index % BIT_CHUNK);
        let prev = self.chunks[chunk] & mask != 0;
        self.chunks[chunk] |= mask;
        prev
    }

    fn count_ones(&self) -> u64 {
        self.chunks.iter().map(|c| u64::from(c.count_ones())).sum()
    }

    fn highest(&self) -> Option<u64> {
        self.chunks.iter().enumerate().rev().find_map(|(i, c)| {
            (*c != 0).then(|| i as u64 * BIT_CHUNK + u64::from(63 - c.leading_zeros()))
        })
    }
}

/// Single-threaded simulated shared memory with per-process step accounting.
#[derive(Clone, Debug, Default)]
pub struct SimMemory {
    cells: Vec<(Kind, Value)>,
    arrays: Vec<BitStore>,
    steps: u64,
    per_process: Vec<u64>,
    trace: Option<Vec<TraceEntry>>,
}

impl SimMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts recording every charged access.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    /// Applies `access` as `process` and charges it exactly one step.
    pub fn access_as(
        &mut self,
        process: ProcessId,
        access: Access,
    ) -> Result<Option<Value>, AccessError> {
        let result = self.apply(access)?;
        if let Some(trace) = &mut self.trace {
            trace.push(TraceEntry {
                step: self.steps,
                process,
                object: access.object,
                primitive: access.primitive,
                result,
            });
        }
        self.steps += 1;
        if process >= self.per_process.len() {
            self.per_process.resize(process + 1, 0);
        }
        self.per_process[process] += 1;
        Ok(result)
    }

    fn apply(&mut self, access: Access) -> Result<Option<Value>, AccessError> {
        let Access { object, primitive } = access;
        match object {
            ObjectId::Cell(id) => {
                let (kind, value) = self
                    .cells
                    .get_mut(id as usize)
                    .ok_or(AccessError::UnknownObject(object))?;
                if !primitive.legal_on(*kind) {
                    return Err(AccessError::IllegalPrimitive {
                        object,
                        kind: *kind,
                        primitive: primitive.name(),
                    });
                }
                Ok(match primitive {
                    Primitive::Read => Some(*value),
                    Primitive::Write(v) => {
                        *value = v;
                        None
                    }
                    Primitive::TestAndSet => {
                        let prev = *value;
                        *value = Value::Word(1);
                        Some(prev)
                    }
                })
            }
            ObjectId::Bit { array, index } => {
                let store = self
                    .arrays
                    .get_mut(array as usize)
                    .ok_or(AccessError::UnknownObject(object))?;
                match primitive {
                    Primitive::Read => Ok(Some(Value::Word(store.get(index) as u64))),
                    Primitive::TestAndSet => Ok(Some(Value::Word(store.set(index) as u64))),
                    Primitive::Write(_) => Err(AccessError::IllegalPrimitive {
                        object,
                        kind: Kind::TasBit,
                        primitive: primitive.name(),
                    }),
                }
            }
        }
    }

    /// Current value of an object, without charging a step.
    pub fn peek(&self, object: ObjectId) -> Option<Value> {
        match object {
            ObjectId::Cell(id) => self.cells.get(id as usize).map(|c| c.1),
            ObjectId::Bit { array, index } => self
                .arrays
                .get(array as usize)
                .map(|s| Value::Word(s.get(index) as u64)),
        }
    }

    /// Length of the longest prefix `0..len` of set bits, and whether the set
    /// bits are exactly that prefix.
    pub fn bit_prefix(&self, array: BitArrayId) -> (u64, bool) {
        let Some(store) = self.arrays.get(array.0 as usize) else {
            return (0, true);
        };
        let ones = store.count_ones();
        let contiguous = store.highest().is_none_or(|h| h + 1 == ones);
        let mut len = 0;
        while store.get(len) {
            len += 1;
        }
        (len, contiguous)
    }

    /// Storage chunks currently allocated for a bit array.
    pub fn bit_chunks(&self, array: BitArrayId) -> usize {
        self.arrays
            .get(array.0 as usize)
            .map_or(0, |s| s.chunks.len())
    }

    pub fn total_steps(&self) -> u64 {
        self.steps
    }

    pub fn steps_of(&self, process: ProcessId) -> u64 {
        self.per_process.get(process).copied().unwrap_or(0)
    }

    pub fn trace(&self) -> Option<&[TraceEntry]> {
        self.trace.as_deref()
    }

    /// A [`Memory`] view that charges every access to `process`.
    pub fn as_process(&mut self, process: ProcessId) -> ProcessView<'_> {
        ProcessView {
            mem: self,
            process,
            accesses: 0,
        }
    }
}

impl Alloc for SimMemory {
    fn alloc(&mut self, kind: Kind, initial: Value) -> Result<ObjectId, AccessError> {
        if !initial.fits(kind) {
            return Err(AccessError::BadInitialValue {
                kind,
                value: initial,
            });
        }
        let id = u32::try_from(self.cells.len()).expect("object ids exhausted");
        self.cells.push((kind, initial));
        Ok(ObjectId::Cell(id))
    }

    fn alloc_bit_array(&mut self) -> BitArrayId {
        let id = u32::try_from(self.arrays.len()).expect("object ids exhausted");
        self.arrays.push(BitStore::default());
        BitArrayId(id)
    }
}

/// Borrowed view of a [`SimMemory`] bound to one process.
pub struct ProcessView<'a> {
    mem: &'a mut SimMemory,
    process: ProcessId,
    accesses: u32,
}

impl ProcessView<'_> {
    /// Accesses performed through this view so far.
    pub fn accesses(&self) -> u32 {
        self.accesses
    }
}

impl Memory for ProcessView<'_> {
    fn access(&mut self, access: Access) -> Result<Option<Value>, AccessError> {
        let r = self.mem.access_as(self.process, access)?;
        self.accesses += 1;
        Ok(r)
    }
}
