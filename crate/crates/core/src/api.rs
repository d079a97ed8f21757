//! Wire types of the search service's JSON interface, shared by the
//! server and its clients. Field names are part of the contract.

use serde::{Deserialize, Serialize};

use crate::query::SearchResult;

pub const DEFAULT_MAX_RESULTS: usize = 50;

fn default_max_results() -> usize {
    DEFAULT_MAX_RESULTS
}

/// Body of `POST /search`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    #[serde(default = "default_max_results")]
    pub max_results: usize,
    /// Advisory client-side timeout, milliseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_hint_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub files_considered: usize,
    pub files_matched: usize,
    pub duration_ms: f64,
    pub shards_searched: usize,
}

/// Body of a `200` response from `POST /search`; also returned with
/// `overloaded = true` on `503`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<SearchResult>,
    pub stats: SearchStats,
    pub overloaded: bool,
}

impl SearchResponse {
    pub fn overloaded() -> SearchResponse {
        SearchResponse {
            results: Vec::new(),
            stats: SearchStats::default(),
            overloaded: true,
        }
    }
}

/// One element of `GET /shards`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShardInfo {
    pub repo_id: String,
    pub revision_id: String,
    pub file_count: u32,
}

/// Body of `GET /health`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub shard_count: usize,
}

/// Error body for 4xx responses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: ErrorBody,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    pub message: String,
    /// Byte position for parse errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

impl ErrorResponse {
    pub fn new(message: impl Into<String>) -> ErrorResponse {
        ErrorResponse { error: ErrorBody { message: message.into(), position: None } }
    }

    pub fn with_position(message: impl Into<String>, position: usize) -> ErrorResponse {
        ErrorResponse { error: ErrorBody { message: message.into(), position: Some(position) } }
    }
}
