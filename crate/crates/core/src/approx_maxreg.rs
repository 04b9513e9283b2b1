//! k-multiplicative-accurate m-bounded max register.
//!
//! A write of `v` stores only `floor(log_k v) + 1` in an exact max register of
//! capacity `floor(log_k(m - 1)) + 2`; a read of index `p` answers `k^p` (or 0
//! for `p = 0`). The answer `x` to a read whose preceding maximum is `v`
//! satisfies `v <= x <= v * k`, and each operation costs at most
//! `ceil(log2(floor(log_k(m - 1)) + 2))` accesses.

use crate::maxreg::{ceil_log2, MaxRegProcess, MaxRegister};
use crate::shmem::{Alloc, Memory, ObjectError, Op, ProcessHandle, Step};

/// Largest supported bound: written values must fit in a `u64`.
pub const MAX_BOUND: u128 = 1 << 64;

/// `floor(log_k v)` for `v >= 1`, by repeated multiplication.
pub fn floor_log(k: u64, v: u128) -> u32 {
    debug_assert!(k >= 2 && v >= 1);
    let k = u128::from(k);
    let mut e = 0;
    let mut pow = k;
    while pow <= v {
        e += 1;
        match pow.checked_mul(k) {
            Some(p) => pow = p,
            None => break,
        }
    }
    e
}

/// `k^e`, or `None` on `u128` overflow.
pub fn checked_pow(k: u64, e: u32) -> Option<u128> {
    u128::from(k).checked_pow(e)
}

#[derive(Clone, Debug)]
pub struct ApproxMaxRegister {
    k: u64,
    bound: u128,
    inner: MaxRegister,
}

impl ApproxMaxRegister {
    /// Register accepting writes in `[1, bound - 1]`.
    pub fn new(mem: &mut dyn Alloc, k: u64, bound: u128) -> Result<Self, ObjectError> {
        if k < 2 {
            return Err(ObjectError::InvalidParameter(
                "accuracy k must be at least 2",
            ));
        }
        if bound < 2 {
            return Err(ObjectError::InvalidParameter("bound m must be at least 2"));
        }
        if bound > MAX_BOUND {
            return Err(ObjectError::InvalidParameter(
                "bound m exceeds the 64-bit value width",
            ));
        }
        let top = floor_log(k, bound - 1) + 1;
        checked_pow(k, top).ok_or(ObjectError::Overflow("largest read response k^p"))?;
        let inner = MaxRegister::new(mem, u64::from(top) + 1)?;
        Ok(ApproxMaxRegister { k, bound, inner })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn bound(&self) -> u128 {
        self.bound
    }

    /// Capacity of the exact register holding exponents.
    pub fn index_capacity(&self) -> u64 {
        self.inner.capacity()
    }

    /// Worst-case accesses per operation.
    pub fn step_bound(&self) -> u32 {
        ceil_log2(self.index_capacity())
    }

    pub fn inner(&self) -> &MaxRegister {
        &self.inner
    }

    pub fn process(&self) -> ApproxMaxRegProcess {
        ApproxMaxRegProcess {
            k: self.k,
            bound: self.bound,
            inner: self.inner.process(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ApproxMaxRegProcess {
    k: u64,
    bound: u128,
    inner: MaxRegProcess,
}

impl ProcessHandle for ApproxMaxRegProcess {
    fn begin(&mut self, op: Op) -> Result<(), ObjectError> {
        match op {
            Op::Write(v) => {
                let v = u128::from(v);
                if v == 0 || v >= self.bound {
                    return Err(ObjectError::OutOfRange {
                        value: v,
                        min: 1,
                        max: self.bound - 1,
                    });
                }
                let index = floor_log(self.k, v) + 1;
                self.inner.begin(Op::Write(u64::from(index)))
            }
            Op::Read => self.inner.begin(Op::Read),
            Op::Inc => Err(ObjectError::UnsupportedOp(op)),
        }
    }

    fn resume(&mut self, mem: &mut dyn Memory) -> Result<Step, ObjectError> {
        Ok(match self.inner.resume(mem)? {
            Step::Done(Some(index)) => {
                let x = match index {
                    0 => 0,
                    p => checked_pow(self.k, p as u32).ok_or(ObjectError::Overflow("k^p"))?,
                };
                Step::Done(Some(x))
            }
            other => other,
        })
    }

    fn is_idle(&self) -> bool {
        self.inner.is_idle()
    }
}
