//! The same process handles over hardware atomics, one OS thread per process.
//!
//! Reads are `Acquire` loads, writes are `Release` stores and test&set is a
//! `SeqCst` swap (or `fetch_or` for packed bit arrays). Bit arrays grow in
//! doubling segments installed through `OnceLock`, so a reader never sees a
//! partially initialized segment and never allocates one.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;
use std::thread;
use std::time::{Duration, Instant};

use relaxed_core::bench::{generate_workload, BenchConfig, BenchError, ObjectKind};
use relaxed_core::shmem::{
    Access, AccessError, Alloc, BitArrayId, Kind, Memory, ObjectError, ObjectId, Primitive,
    ProcessHandle, Value,
};
use relaxed_core::{Op, Ret};

const SEGMENTS: usize = 48;
const WORD_BITS: u64 = 64;

struct BitArray {
    // segment s holds words [2^s - 1, 2^(s+1) - 1)
    segments: [OnceLock<Box<[AtomicU64]>>; SEGMENTS],
}

impl BitArray {
    fn new() -> Self {
        BitArray {
            segments: std::array::from_fn(|_| OnceLock::new()),
        }
    }

    fn locate(index: u64) -> (usize, usize, u64) {
        let word = index / WORD_BITS + 1;
        let seg = (u64::BITS - 1 - word.leading_zeros()) as usize;
        let offset = (word - (1 << seg)) as usize;
        (seg, offset, 1 << (index % WORD_BITS))
    }

    fn read(&self, index: u64) -> bool {
        let (seg, offset, mask) = Self::locate(index);
        self.segments[seg]
            .get()
            .is_some_and(|words| words[offset].load(Ordering::Acquire) & mask != 0)
    }

    fn test_and_set(&self, index: u64) -> bool {
        let (seg, offset, mask) = Self::locate(index);
        let words = self.segments[seg]
            .get_or_init(|| (0..1usize << seg).map(|_| AtomicU64::new(0)).collect());
        words[offset].fetch_or(mask, Ordering::SeqCst) & mask != 0
    }
}

/// Shared memory of hardware atomic cells. Objects are allocated up front
/// through [`Alloc`]; afterwards the memory is shared by reference.
pub struct NativeMemory {
    cells: Vec<(Kind, AtomicU64)>,
    arrays: Vec<BitArray>,
}

impl Default for NativeMemory {
    fn default() -> Self {
        Self::new()
    }
}

impl NativeMemory {
    pub fn new() -> Self {
        NativeMemory {
            cells: Vec::new(),
            arrays: Vec::new(),
        }
    }

    /// A [`Memory`] view for one thread.
    pub fn handle(&self) -> NativeHandle<'_> {
        NativeHandle {
            mem: self,
            steps: 0,
        }
    }
}

// Pairs are packed as two u32 halves: there is no stable 128-bit atomic.
fn encode(value: Value) -> Result<u64, AccessError> {
    match value {
        Value::Word(w) => Ok(w),
        Value::Pair(a, b) => match (u32::try_from(a), u32::try_from(b)) {
            (Ok(a), Ok(b)) => Ok(u64::from(a) << 32 | u64::from(b)),
            _ => Err(AccessError::NativeWidth(value)),
        },
    }
}

fn decode(kind: Kind, raw: u64) -> Value {
    match kind {
        Kind::PairRegister => Value::Pair(raw >> 32, raw & 0xffff_ffff),
        _ => Value::Word(raw),
    }
}

impl Alloc for NativeMemory {
    fn alloc(&mut self, kind: Kind, initial: Value) -> Result<ObjectId, AccessError> {
        if !initial.fits(kind) {
            return Err(AccessError::BadInitialValue {
                kind,
                value: initial,
            });
        }
        let id = ObjectId::Cell(self.cells.len() as u32);
        self.cells.push((kind, AtomicU64::new(encode(initial)?)));
        Ok(id)
    }

    fn alloc_bit_array(&mut self) -> BitArrayId {
        self.arrays.push(BitArray::new());
        BitArrayId(self.arrays.len() as u32 - 1)
    }
}

/// Per-thread accessor counting its own steps.
pub struct NativeHandle<'a> {
    mem: &'a NativeMemory,
    steps: u64,
}

impl NativeHandle<'_> {
    pub fn steps(&self) -> u64 {
        self.steps
    }
}

impl Memory for NativeHandle<'_> {
    fn access(&mut self, access: Access) -> Result<Option<Value>, AccessError> {
        let illegal = |kind| AccessError::IllegalPrimitive {
            object: access.object,
            kind,
            primitive: access.primitive.name(),
        };
        let result = match access.object {
            ObjectId::Cell(id) => {
                let (kind, cell) = self
                    .mem
                    .cells
                    .get(id as usize)
                    .ok_or(AccessError::UnknownObject(access.object))?;
                if !access.primitive.legal_on(*kind) {
                    return Err(illegal(*kind));
                }
                match access.primitive {
                    Primitive::Read => Some(decode(*kind, cell.load(Ordering::Acquire))),
                    Primitive::Write(v) => {
                        cell.store(encode(v)?, Ordering::Release);
                        None
                    }
                    Primitive::TestAndSet => Some(Value::Word(cell.swap(1, Ordering::SeqCst))),
                }
            }
            ObjectId::Bit { array, index } => {
                let bits = self
                    .mem
                    .arrays
                    .get(array as usize)
                    .ok_or(AccessError::UnknownObject(access.object))?;
                match access.primitive {
                    Primitive::Read => Some(Value::Word(u64::from(bits.read(index)))),
                    Primitive::TestAndSet => Some(Value::Word(u64::from(bits.test_and_set(index)))),
                    Primitive::Write(_) => return Err(illegal(Kind::TasBit)),
                }
            }
        };
        self.steps += 1;
        Ok(result)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum NativeError {
    #[error(transparent)]
    Config(#[from] BenchError),
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error("thread {thread}: {source}")]
    Thread {
        thread: usize,
        #[source]
        source: ObjectError,
    },
    #[error("failed to spawn worker thread: {0}")]
    Spawn(#[from] std::io::Error),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct ThreadStats {
    pub ops: u64,
    pub updates: u64,
    pub reads: u64,
    pub steps: u64,
}

/// Outcome of a native run. Performance figures only: no history is kept.
#[derive(Clone, Debug)]
pub struct NativeRun {
    pub elapsed: Duration,
    pub per_thread: Vec<ThreadStats>,
    /// Counter reads above `k` times the increments issued before they
    /// returned. Always zero for a correct counter; unused otherwise.
    pub envelope_violations: u64,
    /// Responses per thread, in program order.
    pub responses: Vec<Vec<Ret>>,
}

impl NativeRun {
    pub fn ops(&self) -> u64 {
        self.per_thread.iter().map(|t| t.ops).sum()
    }

    pub fn ops_per_sec(&self) -> f64 {
        self.ops() as f64 / self.elapsed.as_secs_f64().max(1e-9)
    }
}

/// Runs the workload of `config` on `n` threads over [`NativeMemory`].
pub fn run_native(config: &BenchConfig) -> Result<NativeRun, NativeError> {
    let workload = generate_workload(config)?;
    let mut mem = NativeMemory::new();
    let procs = config.object.instantiate(&mut mem)?;
    let is_counter = config.object.kind == ObjectKind::Counter;
    let k = u128::from(config.object.k);
    let issued = AtomicU64::new(0);

    let mem = &mem;
    let issued = &issued;
    let start = Instant::now();
    let results = thread::scope(|s| {
        let workers = procs
            .into_iter()
            .zip(&workload)
            .enumerate()
            .map(|(id, (mut proc, ops))| {
                thread::Builder::new()
                    .name(format!("p{id}"))
                    .spawn_scoped(s, move || {
                        let mut handle = mem.handle();
                        let mut stats = ThreadStats::default();
                        let mut violations = 0;
                        let mut responses = Vec::with_capacity(ops.len());
                        for &op in ops {
                            if op == Op::Inc {
                                issued.fetch_add(1, Ordering::SeqCst);
                            }
                            let ret = proc
                                .run_solo(op, &mut handle)
                                .map_err(|source| NativeError::Thread { thread: id, source })?;
                            if op == Op::Read {
                                stats.reads += 1;
                                let bound = u128::from(issued.load(Ordering::SeqCst)) * k;
                                if is_counter && ret.unwrap_or(0) > bound {
                                    violations += 1;
                                }
                            } else {
                                stats.updates += 1;
                            }
                            stats.ops += 1;
                            responses.push(ret);
                        }
                        stats.steps = handle.steps();
                        Ok::<_, NativeError>((stats, violations, responses))
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        workers
            .into_iter()
            .map(|w| w.join().expect("worker panicked"))
            .collect::<Result<Vec<_>, NativeError>>()
    })?;
    let elapsed = start.elapsed();

    let mut run = NativeRun {
        elapsed,
        per_thread: Vec::new(),
        envelope_violations: 0,
        responses: Vec::new(),
    };
    for (stats, violations, responses) in results {
        run.per_thread.push(stats);
        run.envelope_violations += violations;
        run.responses.push(responses);
    }
    Ok(run)
}
