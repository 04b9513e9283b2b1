//! Workload mini-language: `p0:inc,read;p1:write(5)`.
//!
//! Processes are separated by `;`, each named `p<id>` with `id < n` and listed
//! at most once. Unlisted processes get no operations.

use relaxed_core::shmem::Workload;
use relaxed_core::Op;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("expected `p<id>:<ops>`, found `{0}`")]
    Process(String),
    #[error("process p{id} is out of range for n = {n}")]
    OutOfRange { id: usize, n: usize },
    #[error("process p{0} is listed twice")]
    Duplicate(usize),
    #[error("unknown operation `{0}` (expected inc, read or write(v))")]
    Op(String),
}

pub fn parse_op(s: &str) -> Result<Op, ParseError> {
    let s = s.trim();
    match s {
        "inc" => Ok(Op::Inc),
        "read" => Ok(Op::Read),
        _ => s
            .strip_prefix("write(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|v| v.trim().parse().ok())
            .map(Op::Write)
            .ok_or_else(|| ParseError::Op(s.to_string())),
    }
}

pub fn parse(spec: &str, n: usize) -> Result<Workload, ParseError> {
    let mut workload: Workload = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, ops) = part
            .split_once(':')
            .ok_or_else(|| ParseError::Process(part.to_string()))?;
        let id: usize = name
            .trim()
            .strip_prefix('p')
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| ParseError::Process(part.to_string()))?;
        if id >= n {
            return Err(ParseError::OutOfRange { id, n });
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(ParseError::Duplicate(id));
        }
        workload[id] = ops
            .split(',')
            .filter(|o| !o.trim().is_empty())
            .map(parse_op)
            .collect::<Result<_, _>>()?;
    }
    Ok(workload)
}

/// Inverse of [`parse`], listing every process.
pub fn format(workload: &Workload) -> String {
    workload
        .iter()
        .enumerate()
        .map(|(p, ops)| {
            let ops: Vec<String> = ops.iter().map(ToString::to_string).collect();
            format!("p{p}:{}", ops.join(","))
        })
        .collect::<Vec<_>>()
        .join(";")
}
