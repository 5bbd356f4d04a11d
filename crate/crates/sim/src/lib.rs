//! File formats and command-line plumbing around `bicycle-critic-core`.

pub mod config;
pub mod trace_csv;
