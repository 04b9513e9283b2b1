//! Report and file formats: history JSON, trace lines, bench CSV.

use std::io::Write;

use serde::{Deserialize, Serialize};

use relaxed_core::bench::Checkpoint;
use relaxed_core::lincheck::{CheckResult, Verdict};
use relaxed_core::shmem::{Event, History, TraceEntry};
use relaxed_core::{Op, ProcessId};

/// One history event as stored on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EventRecord {
    Invoke {
        proc: ProcessId,
        op: String,
        args: Vec<u64>,
        step: u64,
    },
    Respond {
        proc: ProcessId,
        op: String,
        ret: Option<u128>,
        step: u64,
    },
}

// Flat on the way in: serde's tagged-enum buffering cannot hold u128.
#[derive(Deserialize)]
struct RawEvent {
    #[serde(rename = "type")]
    kind: String,
    proc: ProcessId,
    op: String,
    #[serde(default)]
    args: Vec<u64>,
    #[serde(default)]
    ret: Option<u128>,
    step: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("event {index}: unknown operation `{op}` with {args} argument(s)")]
    Op {
        index: usize,
        op: String,
        args: usize,
    },
    #[error("event {index}: unknown event type `{kind}`")]
    Type { index: usize, kind: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn op_args(op: Op) -> Vec<u64> {
    match op {
        Op::Write(v) => vec![v],
        _ => Vec::new(),
    }
}

pub fn event_record(event: &Event) -> EventRecord {
    match *event {
        Event::Invoke { process, op, step } => EventRecord::Invoke {
            proc: process,
            op: op.name().into(),
            args: op_args(op),
            step,
        },
        Event::Respond {
            process,
            op,
            ret,
            step,
        } => EventRecord::Respond {
            proc: process,
            op: op.name().into(),
            ret,
            step,
        },
    }
}

pub fn history_records(history: &History) -> Vec<EventRecord> {
    history.events().iter().map(event_record).collect()
}

pub fn history_to_json(history: &History) -> String {
    serde_json::to_string_pretty(&history_records(history)).expect("history serializes")
}

/// Parses a history file. Respond events carry no arguments, so a `write`
/// response takes its value from the matching invocation.
pub fn history_from_json(text: &str) -> Result<History, FormatError> {
    let records: Vec<RawEvent> = serde_json::from_str(text)?;
    let mut open: Vec<(ProcessId, Op)> = Vec::new();
    let mut history = History::new();
    for (index, rec) in records.into_iter().enumerate() {
        let bad = |op: &str, args: usize| FormatError::Op {
            index,
            op: op.to_string(),
            args,
        };
        let RawEvent {
            kind,
            proc,
            op,
            args,
            ret,
            step,
        } = rec;
        history.push(match kind.as_str() {
            "invoke" => {
                let op = match (op.as_str(), args.as_slice()) {
                    ("inc", []) => Op::Inc,
                    ("read", []) => Op::Read,
                    ("write", [v]) => Op::Write(*v),
                    _ => return Err(bad(&op, args.len())),
                };
                open.retain(|(p, _)| *p != proc);
                open.push((proc, op));
                Event::Invoke {
                    process: proc,
                    op,
                    step,
                }
            }
            "respond" => {
                let name = op;
                let invoked = open.iter().find(|(p, _)| *p == proc).map(|&(_, o)| o);
                let op = match (name.as_str(), invoked) {
                    (_, Some(o)) if o.name() == name => o,
                    ("inc", _) => Op::Inc,
                    ("read", _) => Op::Read,
                    // unmatched write response: History::operations reports it
                    ("write", _) => Op::Write(0),
                    _ => return Err(bad(&name, 0)),
                };
                Event::Respond {
                    process: proc,
                    op,
                    ret,
                    step,
                }
            }
            _ => return Err(FormatError::Type { index, kind }),
        });
    }
    Ok(history)
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRecord {
    pub step: u64,
    pub proc: ProcessId,
    pub object: String,
    pub primitive: &'static str,
    pub arg: Option<String>,
    pub result: Option<String>,
}

pub fn trace_record(entry: &TraceEntry) -> TraceRecord {
    TraceRecord {
        step: entry.step,
        proc: entry.process,
        object: entry.object.to_string(),
        primitive: entry.primitive.name(),
        arg: entry.primitive.argument().map(|v| v.to_string()),
        result: entry.result.map(|v| v.to_string()),
    }
}

/// Tab-separated trace, one line per step.
pub fn write_trace(out: &mut dyn Write, trace: &[TraceEntry]) -> std::io::Result<()> {
    for entry in trace {
        writeln!(out, "{entry}")?;
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct VerdictRecord {
    pub verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<usize>>,
    pub states_explored: u64,
}

pub fn verdict_record(result: &CheckResult) -> VerdictRecord {
    VerdictRecord {
        verdict: result.verdict.name(),
        witness: match &result.verdict {
            Verdict::Valid { witness } => Some(witness.clone()),
            _ => None,
        },
        states_explored: result.states_explored,
    }
}

#[derive(Serialize)]
struct CsvRow {
    ops: u64,
    total_steps: u64,
    amortized: f64,
    max_op_steps: u64,
}

/// Bench CSV: an optional `#` comment line, a header, one row per checkpoint.
pub fn write_checkpoints_csv(
    out: &mut dyn Write,
    comment: Option<&str>,
    rows: &[Checkpoint],
) -> anyhow::Result<()> {
    if let Some(c) = comment {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(CsvRow {
            ops: r.ops,
            total_steps: r.total_steps,
            amortized: r.amortized,
            max_op_steps: r.max_op_steps,
        })?;
    }
    w.flush()?;
    Ok(())
}
