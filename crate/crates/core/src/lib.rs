//! Relaxed wait-free shared-memory objects and the harness that verifies them.
//!
//! The crate provides:
//!
//! * [`shmem`]: an instrumented shared-memory substrate (read/write registers,
//!   test&set bits, pair registers) and a deterministic scheduler that drives
//!   operations one base-object access at a time.
//! * [`maxreg`]: the exact m-bounded max register built as a tree of switches.
//! * [`approx_maxreg`]: a k-multiplicative-accurate m-bounded max register that
//!   stores only the exponent of each written value in an exact register.
//! * [`counter`]: a k-multiplicative-accurate unbounded counter with constant
//!   amortized step complexity when `k * k >= n`.
//! * [`lincheck`]: a memoized checker for linearizability against relaxed
//!   sequential specifications.
//! * [`bench`]: step-complexity measurements over seeded simulated runs.
//!
//! Everything here is `no_std` with `alloc`. Threads, files and the CLI live
//! in the `relaxed-harness` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod approx_maxreg;
pub mod bench;
pub mod counter;
pub mod lincheck;
pub mod maxreg;
pub mod shmem;

pub use shmem::{Op, ProcessId, Ret};
