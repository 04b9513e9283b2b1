//! Std companion to `relaxed-core`: hardware-atomics backend, report formats
//! and the `relaxed` command line.

pub mod cli;
pub mod format;
pub mod native;
pub mod workload;
