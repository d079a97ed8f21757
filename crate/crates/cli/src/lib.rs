//! Library side of the `scs` binary: subcommand implementations, the
//! HTTP search client and the per-point retrieval pipeline.

pub mod client;
pub mod commands;
pub mod pipeline;
pub mod store;

pub use client::{HttpSearchClient, RevisionOrderedClient};
pub use commands::{
    cmd_hitrate, cmd_index, cmd_retrieve, cmd_serve, run_hitrate, CommandError, HitRateReport,
    HitrateOptions, IndexOptions, ModeReport, RetrieveOptions,
};
pub use pipeline::{retrieve_point, BudgetOptions, OutputLine, PointOutcome};
pub use store::ShardStore;
