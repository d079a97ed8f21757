//! GPU-free keyword search for code-completion context.
//!
//! The pipeline: repository revisions are indexed into immutable
//! [`shard`]s; for each completion point the [`miner`] reconstructs the
//! in-progress edit as a diff and mines ranked identifiers from it; the
//! [`ladder`] escalates through 19 query formulations against a search
//! backend until one returns results; the [`assemble`] stage packs the
//! winning results into a token-budgeted context bundle.

pub mod api;
pub mod assemble;
pub mod dataset;
pub mod ladder;
pub mod lang;
pub mod miner;
pub mod query;
pub mod shard;

pub use api::{SearchRequest, SearchResponse, SearchStats, ShardInfo};
pub use assemble::{
    assemble, compute_budget, merge_overlaps, ContextBundle, ContentSource, DefaultTokenCounter,
    Snippet, TokenBudget, TokenCounter,
};
pub use dataset::{read_dataset, FieldMap};
pub use ladder::{
    attach_scope, execute_ladder, generate_variants, scope_variants, LadderConfig, LadderOutcome,
    QueryVariant, SearchClient, SearchMode, VariantName,
};
pub use lang::Language;
pub use miner::{compute_diff, mine, reconstruct_modified, CompletionPoint, DiffContext, MinedTerms};
pub use query::{parse_query, plan_trigrams, CompiledQuery, ParseError, QueryNode, SearchResult};
pub use shard::{build_shard, read_shard, search_shard, write_shard, Shard, ShardMeta};
