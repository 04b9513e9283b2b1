//! The `relaxed` command line: `check`, `bench` and `trace`.
//!
//! Exit statuses: 0 success, 1 violation found, 2 usage or I/O error,
//! 3 inconclusive (checker budget exhausted, no violation).

use std::collections::HashMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use relaxed_core::bench::{
    generate_workload, measure, AnyProcess, BenchConfig, Checkpoint, ObjectKind, ObjectParams,
};
use relaxed_core::lincheck::{BuiltinSpec, CheckResult, Checker, Verdict};
use relaxed_core::shmem::{
    for_each_interleaving, run, History, Recording, Schedule, SimMemory, Simulation, Workload,
};
use relaxed_core::{Op, ProcessId, Ret};

use crate::format::{self, EventRecord, TraceRecord, VerdictRecord};
use crate::native::{run_native, ThreadStats};
use crate::workload;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "relaxed",
    version,
    about = "Check, benchmark and trace relaxed wait-free objects"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run schedules and check every history for relaxed linearizability.
    Check(CheckArgs),
    /// Measure step complexity (simulated) or throughput (native).
    Bench(BenchArgs),
    /// Dump the per-step trace of one seeded schedule.
    Trace(TraceArgs),
}

#[derive(ValueEnum, Copy, Clone, Debug, PartialEq, Eq)]
enum ObjectArg {
    Counter,
    MaxregExact,
    MaxregApprox,
}

impl From<ObjectArg> for ObjectKind {
    fn from(o: ObjectArg) -> Self {
        match o {
            ObjectArg::Counter => ObjectKind::Counter,
            ObjectArg::MaxregExact => ObjectKind::MaxRegExact,
            ObjectArg::MaxregApprox => ObjectKind::MaxRegApprox,
        }
    }
}

#[derive(ValueEnum, Copy, Clone, Debug, PartialEq, Eq)]
enum Format {
    Text,
    Json,
    Csv,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Text => "text",
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

#[derive(Args, Debug, Clone)]
struct ObjectArgs {
    #[arg(long, value_enum)]
    object: ObjectArg,
    /// Number of processes.
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Accuracy parameter (ignored by maxreg-exact).
    #[arg(long, default_value_t = 2)]
    k: u64,
    /// Bound of the max registers: values lie in [0, m).
    #[arg(long)]
    m: Option<u128>,
}

impl ObjectArgs {
    /// Validated parameters; builds the object once so that every parameter
    /// error surfaces before any run.
    fn params(&self) -> anyhow::Result<ObjectParams> {
        let kind = ObjectKind::from(self.object);
        if kind.needs_bound() && self.m.is_none() {
            bail!("--m is required for {}", kind.name());
        }
        let params = ObjectParams {
            kind,
            n: self.n,
            k: self.k,
            m: self.m,
        };
        params
            .instantiate(&mut SimMemory::new())
            .context("invalid object parameters")?;
        Ok(params)
    }

    fn spec(&self) -> BuiltinSpec {
        match self.object {
            ObjectArg::Counter => BuiltinSpec::counter(self.k),
            ObjectArg::MaxregExact => BuiltinSpec::maxreg_exact(),
            ObjectArg::MaxregApprox => BuiltinSpec::maxreg_approx(self.k),
        }
    }

    fn echo(&self, out: &mut String) {
        let _ = write!(
            out,
            " --object {} --n {} --k {}",
            ObjectKind::from(self.object).name(),
            self.n,
            self.k
        );
        if let Some(m) = self.m {
            let _ = write!(out, " --m {m}");
        }
    }
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("mode").required(true).args(["exhaustive", "random", "history"])))]
struct CheckArgs {
    #[command(flatten)]
    object: ObjectArgs,
    /// Workload, e.g. "p0:inc,read;p1:write(5)". Random workloads are drawn
    /// per schedule when absent.
    #[arg(long)]
    ops: Option<String>,
    /// Enumerate every interleaving of the workload.
    #[arg(long, requires = "ops")]
    exhaustive: bool,
    /// Run this many seeded random schedules.
    #[arg(long)]
    random: Option<u64>,
    /// Check a recorded history file instead of running anything.
    #[arg(long, conflicts_with = "ops")]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Operations per process in generated workloads.
    #[arg(long, default_value_t = 3)]
    ops_per_process: u64,
    /// Fraction of reads in generated workloads.
    #[arg(long, default_value_t = 0.5)]
    read_fraction: f64,
    /// Step bound per interleaving in exhaustive mode.
    #[arg(long, default_value_t = 10_000)]
    depth: usize,
    /// Checker state budget per history.
    #[arg(long, default_value_t = 10_000_000)]
    budget: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[command(flatten)]
    object: ObjectArgs,
    /// Total operation count.
    #[arg(long, default_value_t = 100_000)]
    ops: u64,
    /// Fraction of reads in the workload.
    #[arg(long, default_value_t = 0.1)]
    read_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run on hardware atomics with one thread per process.
    #[arg(long)]
    native: bool,
    /// csv or json; native runs report json.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TraceArgs {
    #[command(flatten)]
    object: ObjectArgs,
    /// Workload, e.g. "p0:inc,read".
    #[arg(long)]
    ops: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Check(a) => cmd_check(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Trace(a) => cmd_trace(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn emit(output: &Option<PathBuf>, body: &[u8]) -> anyhow::Result<()> {
    match output {
        Some(path) => {
            std::fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    Ok(body)
}

fn parse_workload(spec: &str, n: usize) -> anyhow::Result<Workload> {
    workload::parse(spec, n).with_context(|| format!("malformed --ops {}", quote(spec)))
}

fn simulation(
    params: &ObjectParams,
    workload: Workload,
    rec: Recording,
) -> anyhow::Result<Simulation<AnyProcess>> {
    let mut mem = SimMemory::new();
    let procs = params.instantiate(&mut mem)?;
    Ok(Simulation::with_recording(mem, procs, workload, rec)?)
}

#[derive(Default, Serialize)]
struct Tally {
    schedules: u64,
    distinct_histories: u64,
    truncated: u64,
    valid: u64,
    invalid: u64,
    inconclusive: u64,
}

impl Tally {
    fn add(&mut self, verdict: &Verdict) {
        match verdict {
            Verdict::Valid { .. } => self.valid += 1,
            Verdict::Invalid => self.invalid += 1,
            Verdict::Inconclusive => self.inconclusive += 1,
        }
    }

    fn exit_code(&self) -> i32 {
        if self.invalid > 0 {
            EXIT_VIOLATION
        } else if self.inconclusive > 0 {
            EXIT_INCONCLUSIVE
        } else {
            EXIT_OK
        }
    }
}

#[derive(Serialize)]
struct CheckReport {
    config: String,
    mode: &'static str,
    #[serde(flatten)]
    tally: Tally,
    #[serde(skip_serializing_if = "Option::is_none")]
    counterexample: Option<Vec<EventRecord>>,
}

#[derive(Serialize)]
struct HistoryReport {
    config: String,
    #[serde(flatten)]
    verdict: VerdictRecord,
}

/// Checks histories, reusing verdicts of identical ones.
struct Judge {
    spec: BuiltinSpec,
    checker: Checker,
    seen: HashMap<Vec<(bool, ProcessId, Op, Ret)>, Verdict>,
    tally: Tally,
    counterexample: Option<History>,
}

impl Judge {
    fn judge(&mut self, history: History) -> anyhow::Result<()> {
        self.tally.schedules += 1;
        // step indices do not affect the verdict
        let key = history.shape();
        let verdict = match self.seen.get(&key) {
            Some(v) => v.clone(),
            None => {
                self.tally.distinct_histories += 1;
                let v = self.checker.check(&history, &self.spec)?.verdict;
                if v == Verdict::Invalid && self.counterexample.is_none() {
                    self.counterexample = Some(history);
                }
                self.seen.insert(key, v.clone());
                v
            }
        };
        self.tally.add(&verdict);
        Ok(())
    }
}

fn cmd_check(a: &CheckArgs) -> anyhow::Result<i32> {
    let params = a.object.params()?;
    if matches!(a.format, Format::Csv) {
        bail!("check reports are text or json");
    }
    if !(0.0..=1.0).contains(&a.read_fraction) {
        bail!("--read-fraction must lie in [0, 1]");
    }
    let fixed = a
        .ops
        .as_deref()
        .map(|s| parse_workload(s, params.n))
        .transpose()?;

    let mut config = String::from("relaxed check");
    a.object.echo(&mut config);
    let checker = Checker::with_budget(a.budget);

    if let Some(path) = &a.history {
        let _ = write!(
            config,
            " --history {} --budget {}",
            quote(&path.display().to_string()),
            a.budget
        );
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let history = format::history_from_json(&text)?;
        let result: CheckResult = checker.check(&history, &a.object.spec())?;
        let record = format::verdict_record(&result);
        let body = match a.format {
            Format::Json => to_json(&HistoryReport {
                config,
                verdict: record,
            })?,
            _ => format!(
                "# {config}\nverdict: {}\nstates explored: {}\n",
                record.verdict, record.states_explored
            )
            .into_bytes(),
        };
        emit(&a.output, &body)?;
        return Ok(match result.verdict {
            Verdict::Valid { .. } => EXIT_OK,
            Verdict::Invalid => EXIT_VIOLATION,
            Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        });
    }

    let mut judge = Judge {
        spec: a.object.spec(),
        checker,
        seen: HashMap::new(),
        tally: Tally::default(),
        counterexample: None,
    };
    let rec = Recording {
        history: true,
        trace: false,
    };
    let mode =
        if a.exhaustive {
            let workload = fixed.clone().expect("clap requires --ops");
            let _ = write!(
                config,
                " --ops {} --exhaustive --depth {}",
                quote(&workload::format(&workload)),
                a.depth
            );
            let mut failure = None;
            let stats =
                for_each_interleaving(simulation(&params, workload, rec)?, a.depth, |sim| {
                    match judge.judge(sim.history()) {
                        Ok(()) => ControlFlow::Continue(()),
                        Err(e) => {
                            failure = Some(e);
                            ControlFlow::Break(())
                        }
                    }
                })?;
            if let Some(e) = failure {
                return Err(e);
            }
            judge.tally.truncated = stats.truncated;
            "exhaustive"
        } else {
            let count = a.random.expect("clap requires a mode");
            match &fixed {
                Some(w) => {
                    let _ = write!(config, " --ops {}", quote(&workload::format(w)));
                }
                None => {
                    let _ = write!(
                        config,
                        " --ops-per-process {} --read-fraction {}",
                        a.ops_per_process, a.read_fraction
                    );
                }
            }
            let _ = write!(config, " --random {count} --seed {}", a.seed);
            let mut seeds = ChaCha8Rng::seed_from_u64(a.seed);
            for _ in 0..count {
                let (wseed, sseed): (u64, u64) = (seeds.gen(), seeds.gen());
                let workload = match &fixed {
                    Some(w) => w.clone(),
                    None => generate_workload(&BenchConfig {
                        object: params,
                        read_fraction: a.read_fraction,
                        total_ops: a.ops_per_process * params.n as u64,
                        seed: wseed,
                    })?,
                };
                let out = run(
                    simulation(&params, workload, rec)?,
                    &Schedule::Seeded(sseed),
                )?;
                judge.judge(out.history)?;
            }
            "random"
        };
    let _ = write!(config, " --budget {}", a.budget);

    let code = judge.tally.exit_code();
    let counterexample = judge.counterexample.as_ref().map(format::history_records);
    let body = match a.format {
        Format::Json => to_json(&CheckReport {
            config,
            mode,
            tally: judge.tally,
            counterexample,
        })?,
        _ => {
            let t = &judge.tally;
            let mut s = format!(
                "# {config}\nmode: {mode}\nschedules: {}\ndistinct histories: {}\ntruncated: {}\nvalid: {}\ninvalid: {}\ninconclusive: {}\n",
                t.schedules, t.distinct_histories, t.truncated, t.valid, t.invalid, t.inconclusive
            );
            if let Some(h) = &judge.counterexample {
                s.push_str("counterexample:\n");
                s.push_str(&format::history_to_json(h));
                s.push('\n');
            }
            s.into_bytes()
        }
    };
    emit(&a.output, &body)?;
    Ok(code)
}

#[derive(Serialize)]
struct SimulatedBenchReport<'a> {
    config: String,
    mode: &'static str,
    ops: u64,
    total_steps: u64,
    amortized: f64,
    max_op_steps: u64,
    histogram: &'a std::collections::BTreeMap<u64, u64>,
    checkpoints: Vec<CheckpointRecord>,
}

#[derive(Serialize)]
struct CheckpointRecord {
    ops: u64,
    total_steps: u64,
    amortized: f64,
    max_op_steps: u64,
}

impl From<&Checkpoint> for CheckpointRecord {
    fn from(c: &Checkpoint) -> Self {
        CheckpointRecord {
            ops: c.ops,
            total_steps: c.total_steps,
            amortized: c.amortized,
            max_op_steps: c.max_op_steps,
        }
    }
}

#[derive(Serialize)]
struct NativeBenchReport {
    config: String,
    mode: &'static str,
    ops: u64,
    elapsed_secs: f64,
    ops_per_sec: f64,
    envelope_violations: u64,
    per_thread: Vec<ThreadStats>,
}

fn cmd_bench(a: &BenchArgs) -> anyhow::Result<i32> {
    let params = a.object.params()?;
    let config = BenchConfig {
        object: params,
        read_fraction: a.read_fraction,
        total_ops: a.ops,
        seed: a.seed,
    };
    config.validate()?;
    let mut echo = String::from("relaxed bench");
    a.object.echo(&mut echo);
    let _ = write!(
        echo,
        " --ops {} --read-fraction {} --seed {}",
        a.ops, a.read_fraction, a.seed
    );

    if a.native {
        if a.format.is_some_and(|f| f != Format::Json) {
            bail!("native mode reports json only");
        }
        echo.push_str(" --native --format json");
        let run = run_native(&config)?;
        let report = NativeBenchReport {
            config: echo,
            mode: "native",
            ops: run.ops(),
            elapsed_secs: run.elapsed.as_secs_f64(),
            ops_per_sec: run.ops_per_sec(),
            envelope_violations: run.envelope_violations,
            per_thread: run.per_thread.clone(),
        };
        emit(&a.output, &to_json(&report)?)?;
        return Ok(if run.envelope_violations > 0 {
            EXIT_VIOLATION
        } else {
            EXIT_OK
        });
    }

    let format = a.format.unwrap_or(Format::Csv);
    let _ = write!(echo, " --format {}", format.name());
    let report = measure(&config)?;
    let body = match format {
        Format::Csv => {
            let mut out = Vec::new();
            format::write_checkpoints_csv(&mut out, Some(&echo), &report.checkpoints)?;
            out
        }
        Format::Json => to_json(&SimulatedBenchReport {
            config: echo,
            mode: "simulated",
            ops: report.ops,
            total_steps: report.total_steps,
            amortized: report.amortized,
            max_op_steps: report.max_op_steps,
            histogram: &report.histogram,
            checkpoints: report
                .checkpoints
                .iter()
                .map(CheckpointRecord::from)
                .collect(),
        })?,
        Format::Text => bail!("bench reports are csv or json"),
    };
    emit(&a.output, &body)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TraceReport {
    config: String,
    trace: Vec<TraceRecord>,
    history: Vec<EventRecord>,
}

fn cmd_trace(a: &TraceArgs) -> anyhow::Result<i32> {
    let params = a.object.params()?;
    let workload = parse_workload(&a.ops, params.n)?;
    let mut echo = String::from("relaxed trace");
    a.object.echo(&mut echo);
    let _ = write!(
        echo,
        " --ops {} --seed {} --format {}",
        quote(&workload::format(&workload)),
        a.seed,
        a.format.name()
    );

    let rec = Recording {
        history: true,
        trace: true,
    };
    let out = run(
        simulation(&params, workload, rec)?,
        &Schedule::Seeded(a.seed),
    )?;
    let trace = out.memory.trace().unwrap_or_default();
    let body = match a.format {
        Format::Text => {
            // the trace file holds only trace lines; the echo goes to stderr
            eprintln!("# {echo}");
            let mut body = Vec::new();
            format::write_trace(&mut body, trace)?;
            body
        }
        Format::Json => to_json(&TraceReport {
            config: echo,
            trace: trace.iter().map(format::trace_record).collect(),
            history: format::history_records(&out.history),
        })?,
        Format::Csv => bail!("traces are text or json"),
    };
    emit(&a.output, &body)?;
    Ok(EXIT_OK)
}
