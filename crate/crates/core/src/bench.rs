//! Step-complexity measurement over seeded simulated runs.
//!
//! A run splits `total_ops` operations evenly over `n` processes, draws each
//! operation from the configured read/update mix, and executes the whole
//! workload under a seeded uniform schedule. Amortized steps are total
//! accesses divided by operations invoked, sampled at `10^3, 10^4, ...`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::approx_maxreg::{checked_pow, floor_log, ApproxMaxRegProcess, ApproxMaxRegister};
use crate::counter::{Counter, CounterProcess};
use crate::maxreg::{MaxRegProcess, MaxRegister};
use crate::shmem::{
    Alloc, Memory, ObjectError, Op, ProcessHandle, Recording, Ret, SeededSchedule, SimError,
    SimMemory, Simulation, Step, Workload,
};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub enum ObjectKind {
    Counter,
    MaxRegExact,
    MaxRegApprox,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 3] = [
        ObjectKind::Counter,
        ObjectKind::MaxRegExact,
        ObjectKind::MaxRegApprox,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Counter => "counter",
            ObjectKind::MaxRegExact => "maxreg-exact",
            ObjectKind::MaxRegApprox => "maxreg-approx",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }

    pub fn needs_bound(self) -> bool {
        self != ObjectKind::Counter
    }

    /// The operation that is not a read.
    pub fn update_name(self) -> &'static str {
        match self {
            ObjectKind::Counter => "inc",
            _ => "write",
        }
    }
}

/// Shape of one object instance.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct ObjectParams {
    pub kind: ObjectKind,
    pub n: usize,
    pub k: u64,
    /// Bound for the max registers: values lie in `[0, m)`.
    pub m: Option<u128>,
}

impl ObjectParams {
    /// Allocates the object in `mem` and returns one handle per process.
    pub fn instantiate(&self, mem: &mut dyn Alloc) -> Result<Vec<AnyProcess>, ObjectError> {
        if self.n == 0 {
            return Err(ObjectError::InvalidParameter("need at least one process"));
        }
        let m = || {
            self.m.ok_or(ObjectError::InvalidParameter(
                "max registers need a bound m",
            ))
        };
        Ok(match self.kind {
            ObjectKind::Counter => Counter::new(mem, self.n, self.k)?
                .processes()
                .into_iter()
                .map(AnyProcess::Counter)
                .collect(),
            ObjectKind::MaxRegExact => {
                let cap = u64::try_from(m()?).map_err(|_| {
                    ObjectError::InvalidParameter("max register capacity too large to allocate")
                })?;
                let reg = MaxRegister::new(mem, cap)?;
                (0..self.n)
                    .map(|_| AnyProcess::MaxRegExact(reg.process()))
                    .collect()
            }
            ObjectKind::MaxRegApprox => {
                let reg = ApproxMaxRegister::new(mem, self.k, m()?)?;
                (0..self.n)
                    .map(|_| AnyProcess::MaxRegApprox(reg.process()))
                    .collect()
            }
        })
    }
}

/// A process handle of any of the three objects.
#[derive(Clone, Debug)]
pub enum AnyProcess {
    Counter(CounterProcess),
    MaxRegExact(MaxRegProcess),
    MaxRegApprox(ApproxMaxRegProcess),
}

impl ProcessHandle for AnyProcess {
    fn begin(&mut self, op: Op) -> Result<(), ObjectError> {
        match self {
            AnyProcess::Counter(p) => p.begin(op),
            AnyProcess::MaxRegExact(p) => p.begin(op),
            AnyProcess::MaxRegApprox(p) => p.begin(op),
        }
    }

    fn resume(&mut self, mem: &mut dyn Memory) -> Result<Step, ObjectError> {
        match self {
            AnyProcess::Counter(p) => p.resume(mem),
            AnyProcess::MaxRegExact(p) => p.resume(mem),
            AnyProcess::MaxRegApprox(p) => p.resume(mem),
        }
    }

    fn is_idle(&self) -> bool {
        match self {
            AnyProcess::Counter(p) => p.is_idle(),
            AnyProcess::MaxRegExact(p) => p.is_idle(),
            AnyProcess::MaxRegApprox(p) => p.is_idle(),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub object: ObjectParams,
    /// Probability that an operation is a read.
    pub read_fraction: f64,
    pub total_ops: u64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    Object(#[from] ObjectError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.total_ops == 0 {
            return Err(BenchError::Config("operation count must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.read_fraction) {
            return Err(BenchError::Config("read fraction must lie in [0, 1]"));
        }
        if self.object.n == 0 {
            return Err(BenchError::Config("need at least one process"));
        }
        if self.object.kind.needs_bound() && self.object.m.is_none() {
            return Err(BenchError::Config("max registers need a bound m"));
        }
        Ok(())
    }
}

/// Amortized value at one point of a run.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub ops: u64,
    pub total_steps: u64,
    pub amortized: f64,
    pub max_op_steps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityReport {
    pub ops: u64,
    pub total_steps: u64,
    pub amortized: f64,
    pub max_op_steps: u64,
    /// Operations by step count.
    pub histogram: BTreeMap<u64, u64>,
    pub checkpoints: Vec<Checkpoint>,
}

/// `10^3, 10^4, ...` up to `total`, plus `total` itself if it is not one.
pub fn checkpoints(total: u64) -> Vec<u64> {
    let mut out: Vec<u64> = core::iter::successors(Some(1000u64), |c| c.checked_mul(10))
        .take_while(|&c| c <= total)
        .collect();
    if out.last() != Some(&total) {
        out.push(total);
    }
    out
}

/// Per-process operation lists for `config`, drawn from `seed`.
pub fn generate_workload(config: &BenchConfig) -> Result<Workload, BenchError> {
    config.validate()?;
    let ObjectParams { kind, n, k, m } = config.object;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let per = config.total_ops / n as u64;
    let extra = config.total_ops % n as u64;
    let mut workload = Vec::with_capacity(n);
    for p in 0..n {
        let count = per + u64::from((p as u64) < extra);
        let mut ops = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let op = if rng.gen_bool(config.read_fraction) {
                Op::Read
            } else {
                match kind {
                    ObjectKind::Counter => Op::Inc,
                    ObjectKind::MaxRegExact => {
                        let m = m.expect("validated");
                        Op::Write(rng.gen_range(0..m) as u64)
                    }
                    ObjectKind::MaxRegApprox => {
                        Op::Write(bucketed_value(&mut rng, k, m.expect("validated")))
                    }
                }
            };
            ops.push(op);
        }
        workload.push(ops);
    }
    Ok(workload)
}

/// A value in `[1, m)` whose exponent `floor(log_k v)` is uniform, so that
/// large registers see every level of their index tree.
fn bucketed_value(rng: &mut ChaCha8Rng, k: u64, m: u128) -> u64 {
    let top = floor_log(k, m - 1);
    let e = rng.gen_range(0..=top);
    let lo = checked_pow(k, e).expect("below m");
    let hi = checked_pow(k, e + 1).map_or(m, |h| h.min(m));
    rng.gen_range(lo..hi) as u64
}

/// Runs `config` under its seeded schedule and reports step counts.
pub fn measure(config: &BenchConfig) -> Result<ComplexityReport, BenchError> {
    let workload = generate_workload(config)?;
    let mut mem = SimMemory::new();
    let procs = config.object.instantiate(&mut mem)?;
    let rec = Recording {
        history: false,
        trace: false,
    };
    let mut sim = Simulation::with_recording(mem, procs, workload, rec)?;

    let marks = checkpoints(config.total_ops);
    let mut next_mark = marks.iter().copied().peekable();
    let mut rows = Vec::with_capacity(marks.len());
    // schedule stream independent of the workload stream
    let mut slots = SeededSchedule::new(config.seed ^ 0x9e37_79b9_7f4a_7c15, config.object.n);
    while !sim.is_finished() {
        sim.step(slots.next().expect("infinite schedule"))?;
        // the final mark is taken once everything has completed
        while let Some(&c) = next_mark.peek() {
            if c < config.total_ops && sim.invoked_ops() >= c {
                rows.push(checkpoint_of(c, sim.total_steps(), sim.op_steps()));
                next_mark.next();
            } else {
                break;
            }
        }
    }
    rows.push(checkpoint_of(
        config.total_ops,
        sim.total_steps(),
        sim.op_steps(),
    ));

    let report = sim.report();
    let mut histogram = BTreeMap::new();
    for o in &report.per_op {
        *histogram.entry(o.steps).or_insert(0) += 1;
    }
    Ok(ComplexityReport {
        ops: report.op_count(),
        total_steps: report.total_steps,
        amortized: report.amortized(),
        max_op_steps: report.max_op_steps(),
        histogram,
        checkpoints: rows,
    })
}

fn checkpoint_of(ops: u64, total_steps: u64, per_op: &[crate::shmem::OpSteps]) -> Checkpoint {
    Checkpoint {
        ops,
        total_steps,
        amortized: total_steps as f64 / ops as f64,
        max_op_steps: per_op.iter().map(|o| o.steps).max().unwrap_or(0),
    }
}

/// [`measure`] for the counter.
pub fn measure_amortized(config: &BenchConfig) -> Result<ComplexityReport, BenchError> {
    if config.object.kind != ObjectKind::Counter {
        return Err(BenchError::Config(
            "amortized measurement is for the counter",
        ));
    }
    measure(config)
}

/// [`measure`] for the approximate max register.
pub fn measure_worst_case(config: &BenchConfig) -> Result<ComplexityReport, BenchError> {
    if config.object.kind != ObjectKind::MaxRegApprox {
        return Err(BenchError::Config(
            "worst-case measurement is for the approximate max register",
        ));
    }
    measure(config)
}

/// Responses of `workload` run sequentially, process 0 first, on simulated
/// memory. The reference for single-threaded native runs.
pub fn sequential_responses(
    object: &ObjectParams,
    workload: &Workload,
) -> Result<Vec<Vec<Ret>>, ObjectError> {
    let mut mem = SimMemory::new();
    let mut procs = object.instantiate(&mut mem)?;
    let mut out = Vec::with_capacity(workload.len());
    for (id, (proc, ops)) in procs.iter_mut().zip(workload).enumerate() {
        let mut view = mem.as_process(id);
        out.push(
            ops.iter()
                .map(|&op| proc.run_solo(op, &mut view))
                .collect::<Result<_, _>>()?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maxreg::ceil_log2;
    use alloc::vec;

    fn config(kind: ObjectKind, n: usize, k: u64, m: Option<u128>, total_ops: u64) -> BenchConfig {
        BenchConfig {
            object: ObjectParams { kind, n, k, m },
            read_fraction: 0.1,
            total_ops,
            seed: 1,
        }
    }

    #[test]
    fn checkpoint_series() {
        assert_eq!(checkpoints(1_000_000), [1000, 10_000, 100_000, 1_000_000]);
        assert_eq!(checkpoints(2500), [1000, 2500]);
        assert_eq!(checkpoints(2), [2]);
    }

    #[test]
    fn workload_counts_are_exact() {
        let c = config(ObjectKind::Counter, 3, 2, None, 10);
        let w = generate_workload(&c).unwrap();
        assert_eq!(w.iter().map(Vec::len).collect::<Vec<_>>(), [4, 3, 3]);
        let c = config(ObjectKind::MaxRegApprox, 2, 3, Some(1000), 500);
        for op in generate_workload(&c).unwrap().concat() {
            if let Op::Write(v) = op {
                assert!((1..1000).contains(&v));
            }
        }
    }

    #[test]
    fn single_increment_then_read_costs_three_steps() {
        let workload = vec![vec![Op::Inc, Op::Read]];
        let object = ObjectParams {
            kind: ObjectKind::Counter,
            n: 1,
            k: 4,
            m: None,
        };
        let mut mem = SimMemory::new();
        let procs = object.instantiate(&mut mem).unwrap();
        let sim = Simulation::new(mem, procs, workload).unwrap();
        let out = crate::shmem::run(sim, &crate::shmem::Schedule::Seeded(3)).unwrap();
        let steps: Vec<u64> = out.report.per_op.iter().map(|o| o.steps).collect();
        assert_eq!(steps, [1, 2]);
        assert_eq!(out.report.total_steps, 3);
    }

    #[test]
    fn reports_are_deterministic_and_consistent() {
        let c = config(ObjectKind::Counter, 4, 2, None, 3000);
        let a = measure_amortized(&c).unwrap();
        assert_eq!(a, measure_amortized(&c).unwrap());
        assert_eq!(a.histogram.values().sum::<u64>(), 3000);
        let weighted: u64 = a.histogram.iter().map(|(s, c)| s * c).sum();
        assert_eq!(weighted, a.total_steps);
        assert_eq!(a.checkpoints.len(), 2);
        assert_eq!(a.checkpoints.last().unwrap().total_steps, a.total_steps);
    }

    #[test]
    fn worst_case_respects_tree_depth() {
        for bits in [8u32, 16, 32, 64] {
            let m = 1u128 << bits;
            let c = config(ObjectKind::MaxRegApprox, 3, 2, Some(m), 3000);
            let r = measure_worst_case(&c).unwrap();
            let bound = ceil_log2(u64::from(floor_log(2, m - 1)) + 2);
            assert!(r.max_op_steps <= u64::from(bound), "m = 2^{bits}");
        }
    }

    #[test]
    fn measurement_kind_is_checked() {
        let c = config(ObjectKind::MaxRegApprox, 1, 2, Some(16), 10);
        assert!(measure_amortized(&c).is_err());
        let c = config(ObjectKind::Counter, 1, 2, None, 10);
        assert!(measure_worst_case(&c).is_err());
        let mut c = config(ObjectKind::Counter, 1, 2, None, 0);
        assert!(measure(&c).is_err());
        c.total_ops = 5;
        c.read_fraction = 1.5;
        assert!(measure(&c).is_err());
        assert!(measure(&config(ObjectKind::MaxRegExact, 1, 2, None, 5)).is_err());
    }

    #[test]
    fn sequential_reference_matches_solo_counter() {
        let object = ObjectParams {
            kind: ObjectKind::Counter,
            n: 1,
            k: 4,
            m: None,
        };
        let w = vec![vec![
            Op::Read,
            Op::Inc,
            Op::Read,
            Op::Inc,
            Op::Inc,
            Op::Inc,
            Op::Inc,
            Op::Read,
        ]];
        assert_eq!(
            sequential_responses(&object, &w).unwrap(),
            [[Some(0), None, Some(4), None, None, None, None, Some(20)]]
        );
    }
}
