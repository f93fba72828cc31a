//! Verification laboratory around [`bk_core`]: replicated Monte Carlo
//! experiments with deterministic parallel seeding, bound reports,
//! goodness-of-fit statistics, file formats and the `bklab` CLI.

pub mod config;
pub mod harness;
pub mod output;
pub mod stats;

pub mod cli;
