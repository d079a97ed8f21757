//! The 19-variant query ladder.
//!
//! For each completion point the generator emits one slot per variant
//! name, in an order that escalates from the strictest formulation
//! (AND of all function/class names) to the broadest (OR over all
//! identifiers). Execution walks the slots in order, skipping empty
//! ones, and stops at the first non-empty response. Overload and
//! timeout errors are retried with backoff so no request is dropped.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::miner::{CompletionPoint, MinedTerms, RankedIdentifier};
use crate::query::SearchResult;

/// The closed set of variant names, in canonical ladder order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    FunctionsClassesNaive,
    FunctionsClassesTop5,
    FunctionsClassesTop4,
    FunctionsClassesTop3,
    FunctionsClassesRegex,
    FunctionsClassesOr,
    NavigationNaive,
    NavigationUnpacked,
    NavigationUnpackedTop5,
    NavigationUnpackedTop4,
    NavigationUnpackedTop3,
    NavigationRegex,
    NavigationUnpackedOr,
    IdentifiersNaive,
    IdentifiersTop5,
    IdentifiersTop4,
    IdentifiersTop3,
    IdentifiersRegex,
    IdentifiersOr,
}

impl VariantName {
    pub const ALL: [VariantName; 19] = [
        VariantName::FunctionsClassesNaive,
        VariantName::FunctionsClassesTop5,
        VariantName::FunctionsClassesTop4,
        VariantName::FunctionsClassesTop3,
        VariantName::FunctionsClassesRegex,
        VariantName::FunctionsClassesOr,
        VariantName::NavigationNaive,
        VariantName::NavigationUnpacked,
        VariantName::NavigationUnpackedTop5,
        VariantName::NavigationUnpackedTop4,
        VariantName::NavigationUnpackedTop3,
        VariantName::NavigationRegex,
        VariantName::NavigationUnpackedOr,
        VariantName::IdentifiersNaive,
        VariantName::IdentifiersTop5,
        VariantName::IdentifiersTop4,
        VariantName::IdentifiersTop3,
        VariantName::IdentifiersRegex,
        VariantName::IdentifiersOr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantName::FunctionsClassesNaive => "functions_classes_naive",
            VariantName::FunctionsClassesTop5 => "functions_classes_top5",
            VariantName::FunctionsClassesTop4 => "functions_classes_top4",
            VariantName::FunctionsClassesTop3 => "functions_classes_top3",
            VariantName::FunctionsClassesRegex => "functions_classes_regex",
            VariantName::FunctionsClassesOr => "functions_classes_or",
            VariantName::NavigationNaive => "navigation_naive",
            VariantName::NavigationUnpacked => "navigation_unpacked",
            VariantName::NavigationUnpackedTop5 => "navigation_unpacked_top5",
            VariantName::NavigationUnpackedTop4 => "navigation_unpacked_top4",
            VariantName::NavigationUnpackedTop3 => "navigation_unpacked_top3",
            VariantName::NavigationRegex => "navigation_regex",
            VariantName::NavigationUnpackedOr => "navigation_unpacked_or",
            VariantName::IdentifiersNaive => "identifiers_naive",
            VariantName::IdentifiersTop5 => "identifiers_top5",
            VariantName::IdentifiersTop4 => "identifiers_top4",
            VariantName::IdentifiersTop3 => "identifiers_top3",
            VariantName::IdentifiersRegex => "identifiers_regex",
            VariantName::IdentifiersOr => "identifiers_or",
        }
    }
}

impl std::fmt::Display for VariantName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One ladder slot. `query_text` is absent exactly when the variant's
/// term set is empty; such slots are never sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryVariant {
    pub name: VariantName,
    pub query_text: Option<String>,
    pub term_count: usize,
}

impl QueryVariant {
    fn skipped(name: VariantName) -> QueryVariant {
        QueryVariant { name, query_text: None, term_count: 0 }
    }
}

enum Form {
    /// AND of exact quoted terms.
    QuotedAnd,
    /// OR of exact quoted terms.
    QuotedOr,
    /// OR of word-bounded per-term regexes.
    RegexOr,
}

/// Generate all 19 variants in canonical ladder order.
///
/// A topK slot degrades to top-n when the family has `1 <= n < K` terms,
/// unless the identical term set was already produced by a higher slot
/// of the family, in which case it is emitted empty.
pub fn generate_variants(mined: &MinedTerms) -> Vec<QueryVariant> {
    let fc = names(&mined.functions_classes);
    let chains = names(&mined.navigation_chains);
    let comps = names(&mined.navigation_components);
    let idents = names(&mined.identifiers);

    let mut out = Vec::with_capacity(19);

    let mut seen_fc = HashSet::new();
    out.push(build(VariantName::FunctionsClassesNaive, &fc, Form::QuotedAnd, None, &mut seen_fc));
    for (name, k) in [
        (VariantName::FunctionsClassesTop5, 5),
        (VariantName::FunctionsClassesTop4, 4),
        (VariantName::FunctionsClassesTop3, 3),
    ] {
        out.push(build(name, &fc, Form::QuotedAnd, Some(k), &mut seen_fc));
    }
    out.push(build(VariantName::FunctionsClassesRegex, &fc, Form::RegexOr, None, &mut seen_fc));
    out.push(build(VariantName::FunctionsClassesOr, &fc, Form::QuotedOr, None, &mut seen_fc));

    let mut seen_chains = HashSet::new();
    let mut seen_comps = HashSet::new();
    out.push(build(VariantName::NavigationNaive, &chains, Form::QuotedAnd, None, &mut seen_chains));
    out.push(build(VariantName::NavigationUnpacked, &comps, Form::QuotedAnd, None, &mut seen_comps));
    for (name, k) in [
        (VariantName::NavigationUnpackedTop5, 5),
        (VariantName::NavigationUnpackedTop4, 4),
        (VariantName::NavigationUnpackedTop3, 3),
    ] {
        out.push(build(name, &comps, Form::QuotedAnd, Some(k), &mut seen_comps));
    }
    out.push(build(VariantName::NavigationRegex, &chains, Form::RegexOr, None, &mut seen_chains));
    out.push(build(VariantName::NavigationUnpackedOr, &comps, Form::QuotedOr, None, &mut seen_comps));

    let mut seen_idents = HashSet::new();
    out.push(build(VariantName::IdentifiersNaive, &idents, Form::QuotedAnd, None, &mut seen_idents));
    for (name, k) in [
        (VariantName::IdentifiersTop5, 5),
        (VariantName::IdentifiersTop4, 4),
        (VariantName::IdentifiersTop3, 3),
    ] {
        out.push(build(name, &idents, Form::QuotedAnd, Some(k), &mut seen_idents));
    }
    out.push(build(VariantName::IdentifiersRegex, &idents, Form::RegexOr, None, &mut seen_idents));
    out.push(build(VariantName::IdentifiersOr, &idents, Form::QuotedOr, None, &mut seen_idents));

    debug_assert_eq!(out.len(), 19);
    debug_assert!(out.iter().map(|v| v.name).eq(VariantName::ALL));
    out
}

fn names(ranked: &[RankedIdentifier]) -> Vec<&str> {
    ranked.iter().map(|r| r.name.as_str()).collect()
}

fn build(
    name: VariantName,
    ranked: &[&str],
    form: Form,
    top_k: Option<usize>,
    seen: &mut HashSet<Vec<String>>,
) -> QueryVariant {
    if ranked.is_empty() {
        return QueryVariant::skipped(name);
    }
    let terms: &[&str] = match top_k {
        Some(k) => {
            let take = k.min(ranked.len());
            let candidate = &ranked[..take];
            if ranked.len() < k && seen.contains(&set_key(candidate)) {
                return QueryVariant::skipped(name);
            }
            candidate
        }
        None => ranked,
    };
    seen.insert(set_key(terms));
    let query_text = match form {
        Form::QuotedAnd => terms
            .iter()
            .map(|t| format!("\"{t}\""))
            .collect::<Vec<_>>()
            .join(" "),
        Form::QuotedOr => terms
            .iter()
            .map(|t| format!("\"{t}\""))
            .collect::<Vec<_>>()
            .join(" or "),
        Form::RegexOr => terms
            .iter()
            .map(|t| format!("/\\b{}\\b/", escape_regex(t)))
            .collect::<Vec<_>>()
            .join(" or "),
    };
    QueryVariant { name, query_text: Some(query_text), term_count: terms.len() }
}

fn set_key(terms: &[&str]) -> Vec<String> {
    let mut key: Vec<String> = terms.iter().map(|t| t.to_string()).collect();
    key.sort();
    key.dedup();
    key
}

/// Escape every non-word byte so the term matches literally.
fn escape_regex(term: &str) -> String {
    let mut out = String::with_capacity(term.len());
    for c in term.chars() {
        if c.is_ascii_alphanumeric() || c == '_' {
            out.push(c);
        } else {
            out.push('\\');
            out.push(c);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    SingleShard,
    CrossShard,
}

impl SearchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SearchMode::SingleShard => "single",
            SearchMode::CrossShard => "cross",
        }
    }
}

/// Prepend the scope filters: single-shard pins repo and revision,
/// cross-shard names only the repo so the query spans every revision.
pub fn attach_scope(variant: &QueryVariant, cp: &CompletionPoint, mode: SearchMode) -> Option<String> {
    let body = variant.query_text.as_deref()?;
    let repo = scope_value(&cp.repo_id);
    Some(match mode {
        SearchMode::SingleShard => {
            format!("repo:{repo} rev:{} {body}", scope_value(&cp.revision_id))
        }
        SearchMode::CrossShard => format!("repo:{repo} {body}"),
    })
}

fn scope_value(v: &str) -> String {
    if v.bytes().any(|b| b.is_ascii_whitespace() || b == b'(' || b == b')' || b == b'"') {
        format!("\"{v}\"")
    } else {
        v.to_string()
    }
}

/// Scope every non-empty variant for execution.
pub fn scope_variants(
    variants: &[QueryVariant],
    cp: &CompletionPoint,
    mode: SearchMode,
) -> Vec<QueryVariant> {
    variants
        .iter()
        .map(|v| QueryVariant {
            name: v.name,
            query_text: attach_scope(v, cp, mode),
            term_count: v.term_count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderConfig {
    pub timeout_per_request: Duration,
    pub max_retries: u32,
    /// Sleep before retry i is `retry_backoff[min(i, len-1)]`; empty
    /// means no sleep.
    pub retry_backoff: Vec<Duration>,
    pub max_results_per_query: usize,
}

impl Default for LadderConfig {
    fn default() -> LadderConfig {
        LadderConfig {
            timeout_per_request: Duration::from_millis(200),
            max_retries: 3,
            retry_backoff: vec![
                Duration::from_millis(50),
                Duration::from_millis(100),
                Duration::from_millis(200),
            ],
            max_results_per_query: 50,
        }
    }
}

/// Transport-level outcome classification, produced by client
/// implementations.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ClientError {
    /// Server signalled overload (retried).
    #[error("server overloaded")]
    Overloaded,
    /// Request timed out (retried).
    #[error("request timed out")]
    TimedOut,
    /// Could not reach the server (retried).
    #[error("server unreachable: {0}")]
    Unreachable(String),
    /// The server rejected the query itself; indicates a generator bug
    /// and is never retried.
    #[error("malformed query: {0}")]
    MalformedQuery(String),
}

/// A search backend as seen by the ladder.
pub trait SearchClient {
    fn search(
        &self,
        query: &str,
        max_results: usize,
        timeout: Duration,
    ) -> Result<Vec<SearchResult>, ClientError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderAttempt {
    pub variant: VariantName,
    pub result_count: usize,
    pub duration: Duration,
    pub retries: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LadderOutcome {
    pub cp_id: String,
    pub mode: SearchMode,
    pub winning_variant: Option<VariantName>,
    pub attempts: Vec<LadderAttempt>,
    pub hit: bool,
    /// Results of the winning attempt; empty on a miss.
    pub results: Vec<SearchResult>,
}

#[derive(Debug, Error)]
pub enum LadderError {
    #[error("search service unreachable (all retries on all variants failed)")]
    ClientUnreachable,
    #[error("variant {variant} produced a malformed query: {message}")]
    MalformedQuery { variant: VariantName, message: String },
}

/// Walk the (scoped) variants in order until the first non-empty result.
///
/// Every non-skipped variant is either answered or retried to
/// exhaustion before moving on; nothing is recorded after the winner.
pub fn execute_ladder(
    client: &dyn SearchClient,
    cp_id: &str,
    mode: SearchMode,
    variants: &[QueryVariant],
    config: &LadderConfig,
) -> Result<LadderOutcome, LadderError> {
    let mut attempts = Vec::new();
    let mut answered_any = false;
    let mut attempted_any = false;

    for variant in variants {
        let Some(query) = variant.query_text.as_deref() else {
            continue; // term_count 0: never sent
        };
        attempted_any = true;
        let started = Instant::now();
        let mut retries = 0u32;
        loop {
            match client.search(query, config.max_results_per_query, config.timeout_per_request) {
                Ok(results) => {
                    answered_any = true;
                    attempts.push(LadderAttempt {
                        variant: variant.name,
                        result_count: results.len(),
                        duration: started.elapsed(),
                        retries,
                    });
                    if !results.is_empty() {
                        return Ok(LadderOutcome {
                            cp_id: cp_id.to_string(),
                            mode,
                            winning_variant: Some(variant.name),
                            attempts,
                            hit: true,
                            results,
                        });
                    }
                    break;
                }
                Err(ClientError::MalformedQuery(message)) => {
                    return Err(LadderError::MalformedQuery { variant: variant.name, message });
                }
                Err(_) if retries < config.max_retries => {
                    if let Some(backoff) = backoff_for(&config.retry_backoff, retries) {
                        std::thread::sleep(backoff);
                    }
                    retries += 1;
                }
                Err(err) => {
                    log::debug!("variant {} exhausted retries: {err}", variant.name);
                    attempts.push(LadderAttempt {
                        variant: variant.name,
                        result_count: 0,
                        duration: started.elapsed(),
                        retries,
                    });
                    break;
                }
            }
        }
    }

    if attempted_any && !answered_any {
        return Err(LadderError::ClientUnreachable);
    }
    Ok(LadderOutcome {
        cp_id: cp_id.to_string(),
        mode,
        winning_variant: None,
        attempts,
        hit: false,
        results: Vec::new(),
    })
}

fn backoff_for(schedule: &[Duration], retry: u32) -> Option<Duration> {
    if schedule.is_empty() {
        return None;
    }
    Some(schedule[(retry as usize).min(schedule.len() - 1)])
}
