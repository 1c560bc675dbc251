//! Filesystem, threading and command-line layer over `brainformer-core`.
//!
//! - [`config`]: JSON run configurations.
//! - [`io`]: JSON helpers, checksums, corpus and genome files.
//! - [`checkpoint`]: binary parameter and optimizer snapshots with a JSON
//!   sidecar.
//! - [`ledger`]: the append-only JSONL trial ledger.
//! - [`executor`]: concurrent trial evaluation.
//! - [`report`]: tables derived from a ledger.
//! - [`manifest`]: the per-run artifact manifest.
//! - [`cli`]: the `brainformer` command.

pub mod checkpoint;
pub mod cli;
pub mod clock;
pub mod config;
pub mod error;
pub mod executor;
pub mod io;
pub mod ledger;
pub mod manifest;
pub mod report;

pub use brainformer_core as core;
pub use error::{AppError, AppResult};
