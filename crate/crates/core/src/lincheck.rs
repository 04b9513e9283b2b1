//! Linearizability checking against relaxed sequential specifications.
//!
//! The search linearizes one operation at a time, only ever choosing an
//! operation invoked before every unlinearized operation's response, and
//! memoizes failed `(abstract state, linearized set)` pairs. For the counter
//! and the max registers the abstract state is a single integer, which keeps
//! the memo table small.
//!
//! Pending reads are dropped. Pending updates may be linearized anywhere after
//! their invocation or left out.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use crate::shmem::{History, HistoryError, Op, OpRecord, Ret};

/// Sequential specification whose reads may accept a range of responses.
pub trait RelaxedSpec {
    type State: Clone + Ord;

    fn initial(&self) -> Self::State;

    /// State after `op`, or `None` if the object does not support it.
    fn apply(&self, state: &Self::State, op: Op) -> Option<Self::State>;

    /// Whether `ret` is an acceptable response to `op` in `state` (the state
    /// before `op` takes effect).
    fn accepts(&self, state: &Self::State, op: Op, ret: Ret) -> bool;
}

/// The three specifications this crate's objects are checked against. The
/// abstract state is the increment count or the running maximum.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum BuiltinSpec {
    /// Read `x` of count `v` is accepted iff `v/k <= x <= v*k`.
    Counter { k: u64 },
    /// Read must return the running maximum exactly.
    MaxRegExact,
    /// Read `x` of maximum `s` is accepted iff `s <= x <= s*k`.
    MaxRegApprox { k: u64 },
}

impl BuiltinSpec {
    pub fn counter(k: u64) -> Self {
        assert!(k >= 2, "accuracy k must be at least 2");
        BuiltinSpec::Counter { k }
    }

    pub fn maxreg_exact() -> Self {
        BuiltinSpec::MaxRegExact
    }

    pub fn maxreg_approx(k: u64) -> Self {
        assert!(k >= 2, "accuracy k must be at least 2");
        BuiltinSpec::MaxRegApprox { k }
    }
}

/// All built-in specifications for accuracy `k`.
pub fn builtin_specs(k: u64) -> [BuiltinSpec; 3] {
    [
        BuiltinSpec::counter(k),
        BuiltinSpec::maxreg_exact(),
        BuiltinSpec::maxreg_approx(k),
    ]
}

impl RelaxedSpec for BuiltinSpec {
    type State = u128;

    fn initial(&self) -> u128 {
        0
    }

    fn apply(&self, state: &u128, op: Op) -> Option<u128> {
        match (self, op) {
            (_, Op::Read) => Some(*state),
            (BuiltinSpec::Counter { .. }, Op::Inc) => Some(state.saturating_add(1)),
            (BuiltinSpec::MaxRegExact | BuiltinSpec::MaxRegApprox { .. }, Op::Write(v)) => {
                Some((*state).max(u128::from(v)))
            }
            _ => None,
        }
    }

    fn accepts(&self, &state: &u128, op: Op, ret: Ret) -> bool {
        match (op, ret) {
            (Op::Read, Some(x)) => match *self {
                BuiltinSpec::Counter { k } => {
                    let k = u128::from(k);
                    // v/k <= x <= v*k without division
                    state <= x.saturating_mul(k) && x <= state.saturating_mul(k)
                }
                BuiltinSpec::MaxRegExact => x == state,
                BuiltinSpec::MaxRegApprox { k } => {
                    state <= x && x <= state.saturating_mul(u128::from(k))
                }
            },
            (Op::Read, None) => false,
            (_, ret) => ret.is_none(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Operation ids (indices into [`History::operations`]) in linearization order.
    Valid {
        witness: Vec<usize>,
    },
    Invalid,
    /// The state budget ran out before the search finished.
    Inconclusive,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Valid { .. } => "valid",
            Verdict::Invalid => "invalid",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, Verdict::Valid { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckResult {
    pub verdict: Verdict,
    pub states_explored: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("history has {0} operations; at most {MAX_OPS} are supported")]
    TooManyOps(usize),
}

/// Largest number of operations (after dropping pending reads) per history.
pub const MAX_OPS: usize = 128;

/// Memoized linearizability checker with a state budget.
#[derive(Copy, Clone, Debug)]
pub struct Checker {
    pub budget: u64,
}

impl Default for Checker {
    fn default() -> Self {
        Checker { budget: 10_000_000 }
    }
}

/// Checks `history` with the default budget.
pub fn check<S: RelaxedSpec>(history: &History, spec: &S) -> Result<CheckResult, CheckError> {
    Checker::default().check(history, spec)
}

enum Search {
    Found,
    Failed,
    OutOfBudget,
}

struct Ctx<'a, S: RelaxedSpec> {
    spec: &'a S,
    ops: Vec<OpRecord>,
    ids: Vec<usize>,
    required: u128,
    memo: BTreeSet<(S::State, u128)>,
    path: Vec<usize>,
    explored: u64,
    budget: u64,
}

impl Checker {
    pub fn with_budget(budget: u64) -> Self {
        Checker { budget }
    }

    pub fn check<S: RelaxedSpec>(
        &self,
        history: &History,
        spec: &S,
    ) -> Result<CheckResult, CheckError> {
        let (ids, ops): (Vec<usize>, Vec<OpRecord>) = history
            .operations()?
            .into_iter()
            .enumerate()
            .filter(|(_, o)| o.is_complete() || o.op != Op::Read)
            .unzip();
        if ops.len() > MAX_OPS {
            return Err(CheckError::TooManyOps(ops.len()));
        }
        let required = ops
            .iter()
            .enumerate()
            .filter(|(_, o)| o.is_complete())
            .fold(0u128, |m, (i, _)| m | 1 << i);
        let mut ctx = Ctx {
            spec,
            ops,
            ids,
            required,
            memo: BTreeSet::new(),
            path: Vec::new(),
            explored: 0,
            budget: self.budget,
        };
        let verdict = match ctx.search(spec.initial(), 0) {
            Search::Found => Verdict::Valid {
                witness: ctx.path.iter().map(|&i| ctx.ids[i]).collect(),
            },
            Search::Failed => Verdict::Invalid,
            Search::OutOfBudget => Verdict::Inconclusive,
        };
        Ok(CheckResult {
            verdict,
            states_explored: ctx.explored,
        })
    }
}

impl<S: RelaxedSpec> Ctx<'_, S> {
    fn search(&mut self, state: S::State, done: u128) -> Search {
        self.explored += 1;
        if self.explored > self.budget {
            return Search::OutOfBudget;
        }
        if done & self.required == self.required {
            return Search::Found;
        }
        if self.memo.contains(&(state.clone(), done)) {
            return Search::Failed;
        }
        let horizon = self
            .ops
            .iter()
            .enumerate()
            .filter(|(i, _)| done & 1 << i == 0)
            .filter_map(|(_, o)| o.respond.map(|r| r.0))
            .min()
            .unwrap_or(usize::MAX);
        for i in 0..self.ops.len() {
            let o = self.ops[i];
            if done & 1 << i != 0 || o.invoke > horizon {
                continue;
            }
            if let Some((_, ret)) = o.respond {
                if !self.spec.accepts(&state, o.op, ret) {
                    continue;
                }
            }
            let Some(next) = self.spec.apply(&state, o.op) else {
                continue;
            };
            self.path.push(i);
            match self.search(next, done | 1 << i) {
                Search::Failed => {
                    self.path.pop();
                }
                other => return other,
            }
        }
        self.memo.insert((state, done));
        Search::Failed
    }
}

/// Replays `witness` through `spec`: every completed operation appears once,
/// every response is accepted, and real-time order is respected.
pub fn witness_is_valid<S: RelaxedSpec>(history: &History, spec: &S, witness: &[usize]) -> bool {
    let Ok(ops) = history.operations() else {
        return false;
    };
    let mut seen = alloc::vec![false; ops.len()];
    let mut state = spec.initial();
    for (pos, &id) in witness.iter().enumerate() {
        let Some(o) = ops.get(id) else { return false };
        if seen[id] || (!o.is_complete() && o.op == Op::Read) {
            return false;
        }
        seen[id] = true;
        // nothing linearized later may have responded before this was invoked
        if witness[pos + 1..]
            .iter()
            .any(|&later| ops[later].precedes(o))
        {
            return false;
        }
        if let Some((_, ret)) = o.respond {
            if !spec.accepts(&state, o.op, ret) {
                return false;
            }
        }
        match spec.apply(&state, o.op) {
            Some(s) => state = s,
            None => return false,
        }
    }
    ops.iter().zip(&seen).all(|(o, &s)| s || !o.is_complete())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shmem::Event;
    use alloc::vec;
    use proptest::prelude::*;

    fn history(events: &[(bool, usize, Op, Ret)]) -> History {
        let mut h = History::new();
        for &(invoke, process, op, ret) in events {
            h.push(if invoke {
                Event::Invoke {
                    process,
                    op,
                    step: 0,
                }
            } else {
                Event::Respond {
                    process,
                    op,
                    ret,
                    step: 0,
                }
            });
        }
        h
    }

    /// Tries every permutation of every subset of pending updates.
    fn naive<S: RelaxedSpec>(h: &History, spec: &S) -> bool {
        let ops: Vec<OpRecord> = h.operations().unwrap();
        let ids: Vec<usize> = (0..ops.len())
            .filter(|&i| ops[i].is_complete() || ops[i].op != Op::Read)
            .collect();
        let pending: Vec<usize> = ids
            .iter()
            .copied()
            .filter(|&i| !ops[i].is_complete())
            .collect();
        (0u32..1 << pending.len()).any(|subset| {
            let mut chosen: Vec<usize> = ids
                .iter()
                .copied()
                .filter(|i| {
                    ops[*i].is_complete() || {
                        let pos = pending.iter().position(|p| p == i).unwrap();
                        subset & 1 << pos != 0
                    }
                })
                .collect();
            permutations(&mut chosen, 0, &mut |perm| witness_is_valid(h, spec, perm))
        })
    }

    fn permutations(v: &mut Vec<usize>, at: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
        if at == v.len() {
            return f(v);
        }
        for i in at..v.len() {
            v.swap(at, i);
            if permutations(v, at + 1, f) {
                v.swap(at, i);
                return true;
            }
            v.swap(at, i);
        }
        false
    }

    #[test]
    fn sequential_max_register_history() {
        let h = history(&[
            (true, 0, Op::Write(3), None),
            (false, 0, Op::Write(3), None),
            (true, 0, Op::Write(7), None),
            (false, 0, Op::Write(7), None),
            (true, 1, Op::Read, None),
            (false, 1, Op::Read, Some(7)),
        ]);
        let r = check(&h, &BuiltinSpec::maxreg_exact()).unwrap();
        assert_eq!(
            r.verdict,
            Verdict::Valid {
                witness: vec![0, 1, 2]
            }
        );
    }

    #[test]
    fn counter_read_too_large_is_invalid() {
        let h = history(&[
            (true, 0, Op::Inc, None),
            (false, 0, Op::Inc, None),
            (true, 1, Op::Read, None),
            (false, 1, Op::Read, Some(5)),
        ]);
        assert_eq!(
            check(&h, &BuiltinSpec::counter(2)).unwrap().verdict,
            Verdict::Invalid
        );
    }

    #[test]
    fn counter_read_concurrent_with_increment() {
        let h = history(&[
            (true, 1, Op::Read, None),
            (true, 0, Op::Inc, None),
            (false, 0, Op::Inc, None),
            (false, 1, Op::Read, Some(4)),
        ]);
        let r = check(&h, &BuiltinSpec::counter(4)).unwrap();
        assert_eq!(
            r.verdict,
            Verdict::Valid {
                witness: vec![1, 0]
            }
        );
    }

    #[test]
    fn builtin_predicates() {
        let [counter, exact, approx] = builtin_specs(4);
        assert!(counter.accepts(&5, Op::Read, Some(20)));
        assert!(!counter.accepts(&5, Op::Read, Some(21)));
        assert!(counter.accepts(&5, Op::Read, Some(2)));
        assert!(!counter.accepts(&5, Op::Read, Some(1)));
        assert!(counter.accepts(&0, Op::Read, Some(0)));
        assert!(!counter.accepts(&0, Op::Read, Some(1)));
        assert!(exact.accepts(&0, Op::Read, Some(0)));
        assert!(!exact.accepts(&3, Op::Read, Some(4)));
        assert!(approx.accepts(&4, Op::Read, Some(16)));
        assert!(!approx.accepts(&4, Op::Read, Some(3)));
        assert!(!approx.accepts(&0, Op::Read, Some(1)));
        assert!(approx.accepts(&0, Op::Read, Some(0)));
        assert_eq!(counter.apply(&1, Op::Write(2)), None);
        assert_eq!(exact.apply(&1, Op::Inc), None);
    }

    #[test]
    fn real_time_order_is_enforced() {
        // read 0 strictly after a completed write cannot be linearized first
        let h = history(&[
            (true, 0, Op::Write(2), None),
            (false, 0, Op::Write(2), None),
            (true, 1, Op::Read, None),
            (false, 1, Op::Read, Some(0)),
        ]);
        assert_eq!(
            check(&h, &BuiltinSpec::maxreg_exact()).unwrap().verdict,
            Verdict::Invalid
        );
    }

    #[test]
    fn pending_updates_may_be_included_or_dropped() {
        let included = history(&[
            (true, 0, Op::Write(6), None),
            (true, 1, Op::Read, None),
            (false, 1, Op::Read, Some(6)),
        ]);
        assert!(check(&included, &BuiltinSpec::maxreg_exact())
            .unwrap()
            .verdict
            .is_valid());
        let dropped = history(&[
            (true, 0, Op::Write(6), None),
            (true, 1, Op::Read, None),
            (false, 1, Op::Read, Some(0)),
            (true, 1, Op::Read, None),
        ]);
        assert!(check(&dropped, &BuiltinSpec::maxreg_exact())
            .unwrap()
            .verdict
            .is_valid());
    }

    #[test]
    fn budget_exhaustion_is_inconclusive() {
        let h = history(&[
            (true, 0, Op::Write(1), None),
            (true, 1, Op::Write(2), None),
            (false, 0, Op::Write(1), None),
            (false, 1, Op::Write(2), None),
            (true, 0, Op::Read, None),
            (false, 0, Op::Read, Some(3)),
        ]);
        let r = Checker::with_budget(2)
            .check(&h, &BuiltinSpec::maxreg_exact())
            .unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        let r = Checker::default()
            .check(&h, &BuiltinSpec::maxreg_exact())
            .unwrap();
        assert_eq!(r.verdict, Verdict::Invalid);
    }

    fn arb_history() -> impl Strategy<Value = History> {
        // (process, op kind, value, respond-now)
        prop::collection::vec((0usize..3, 0u8..3, 0u64..6, any::<bool>()), 1..16).prop_map(
            |script| {
                let mut h = History::new();
                let mut open: [Option<Op>; 3] = [None; 3];
                for (p, kind, v, close) in script {
                    match open[p] {
                        Some(op) if close => {
                            let ret = (op == Op::Read).then_some(u128::from(v));
                            h.push(Event::Respond {
                                process: p,
                                op,
                                ret,
                                step: 0,
                            });
                            open[p] = None;
                        }
                        Some(_) => {}
                        None => {
                            let op = match kind {
                                0 => Op::Inc,
                                1 => Op::Read,
                                _ => Op::Write(v),
                            };
                            h.push(Event::Invoke {
                                process: p,
                                op,
                                step: 0,
                            });
                            open[p] = Some(op);
                        }
                    }
                }
                h
            },
        )
    }

    proptest! {
        #[test]
        fn memoized_search_agrees_with_naive(h in arb_history(), k in 2u64..4) {
            for spec in builtin_specs(k) {
                let r = check(&h, &spec).unwrap();
                prop_assert_eq!(r.verdict.is_valid(), naive(&h, &spec));
                if let Verdict::Valid { witness } = &r.verdict {
                    prop_assert!(witness_is_valid(&h, &spec, witness));
                }
            }
        }
    }
}
