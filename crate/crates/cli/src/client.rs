//! HTTP client side of the search service, as consumed by the ladder.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use scs_core::api::{ErrorResponse, SearchRequest, SearchResponse};
use scs_core::ladder::{ClientError, SearchClient};
use scs_core::query::SearchResult;

/// Blocking client for a running search service.
pub struct HttpSearchClient {
    base: String,
    client: reqwest::blocking::Client,
}

impl HttpSearchClient {
    pub fn new(server: &str) -> HttpSearchClient {
        let base = server.trim_end_matches('/').to_string();
        HttpSearchClient { base, client: reqwest::blocking::Client::new() }
    }
}

impl SearchClient for HttpSearchClient {
    fn search(
        &self,
        query: &str,
        max_results: usize,
        timeout: Duration,
    ) -> Result<Vec<SearchResult>, ClientError> {
        let request = SearchRequest {
            query: query.to_string(),
            max_results,
            timeout_hint_ms: Some(timeout.as_millis() as u64),
        };
        let sent = self
            .client
            .post(format!("{}/search", self.base))
            .timeout(timeout)
            .json(&request)
            .send();
        let resp = match sent {
            Ok(resp) => resp,
            Err(e) if e.is_timeout() => return Err(ClientError::TimedOut),
            Err(e) => return Err(ClientError::Unreachable(e.to_string())),
        };
        match resp.status().as_u16() {
            200 => {
                let body: SearchResponse = resp
                    .json()
                    .map_err(|e| ClientError::Unreachable(format!("bad response body: {e}")))?;
                Ok(body.results)
            }
            503 => Err(ClientError::Overloaded),
            400 => {
                let message = resp
                    .json::<ErrorResponse>()
                    .map(|e| e.error.message)
                    .unwrap_or_else(|_| "query rejected".to_string());
                Err(ClientError::MalformedQuery(message))
            }
            // an unindexed repo is a definitive empty answer, not a fault
            404 => Ok(Vec::new()),
            status => Err(ClientError::Unreachable(format!("unexpected status {status}"))),
        }
    }
}

/// Temporal-leakage guard: drops results from revisions ordered after
/// the querying point's revision. Revisions missing from the order file
/// are dropped too.
pub struct RevisionOrderedClient<'a> {
    pub inner: &'a dyn SearchClient,
    pub orders: Arc<HashMap<(String, String), u64>>,
    pub cutoff: u64,
}

impl SearchClient for RevisionOrderedClient<'_> {
    fn search(
        &self,
        query: &str,
        max_results: usize,
        timeout: Duration,
    ) -> Result<Vec<SearchResult>, ClientError> {
        let results = self.inner.search(query, max_results, timeout)?;
        Ok(results
            .into_iter()
            .filter(|r| {
                self.orders
                    .get(&(r.repo_id.clone(), r.revision_id.clone()))
                    .is_some_and(|&order| order <= self.cutoff)
            })
            .collect())
    }
}
