//! The per-point retrieval pipeline: reconstruct the diff, mine terms,
//! run the ladder, assemble the bundle. Shared by `retrieve` and
//! `hitrate`.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use scs_core::assemble::{assemble, compute_budget, AssembleError, ContextBundle, TokenCounter};
use scs_core::ladder::{
    execute_ladder, generate_variants, scope_variants, LadderConfig, LadderError, LadderOutcome,
    SearchClient, SearchMode,
};
use scs_core::lang::Language;
use scs_core::miner::{mine, CompletionPoint};

use crate::client::RevisionOrderedClient;
use crate::store::ShardStore;

/// Budget knobs, fixed per run.
#[derive(Debug, Clone, Copy)]
pub struct BudgetOptions {
    pub model_max: u64,
    pub reserved_buffer: u64,
    pub per_file_override: Option<u64>,
    pub top_k: u64,
}

impl Default for BudgetOptions {
    fn default() -> BudgetOptions {
        BudgetOptions { model_max: 8192, reserved_buffer: 256, per_file_override: None, top_k: 5 }
    }
}

pub struct PointOutcome {
    pub outcome: LadderOutcome,
    pub bundle: ContextBundle,
    pub duration: Duration,
}

/// One line of the retrieval output file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputLine {
    pub id: String,
    pub hit: bool,
    pub winning_variant: Option<String>,
    pub context: String,
    pub total_tokens: usize,
}

impl OutputLine {
    pub fn from_outcome(point: &PointOutcome) -> OutputLine {
        OutputLine {
            id: point.outcome.cp_id.clone(),
            hit: point.outcome.hit,
            winning_variant: point.outcome.winning_variant.map(|v| v.as_str().to_string()),
            context: point.bundle.rendered.clone(),
            total_tokens: point.bundle.total_tokens,
        }
    }
}

/// Run the full pipeline for one completion point.
///
/// A missing file at assembly time (index/service mismatch) degrades to
/// an empty bundle with a warning rather than dropping the point.
pub fn retrieve_point(
    cp: &CompletionPoint,
    store: &ShardStore,
    client: &dyn SearchClient,
    mode: SearchMode,
    config: &LadderConfig,
    budget_opts: &BudgetOptions,
    tokenizer: &dyn TokenCounter,
    revision_orders: Option<&Arc<HashMap<(String, String), u64>>>,
) -> Result<PointOutcome, LadderError> {
    let started = Instant::now();
    let original = store.original_text(&cp.repo_id, &cp.revision_id, &cp.path);
    let language = Language::from_path(&cp.path);
    let (_diff, mined) = mine(cp, &original, language);
    let variants = generate_variants(&mined);
    let scoped = scope_variants(&variants, cp, mode);

    let outcome = match revision_orders {
        Some(orders) => {
            let cutoff = orders
                .get(&(cp.repo_id.clone(), cp.revision_id.clone()))
                .copied()
                .unwrap_or(u64::MAX);
            let guarded =
                RevisionOrderedClient { inner: client, orders: Arc::clone(orders), cutoff };
            execute_ladder(&guarded, &cp.id, mode, &scoped, config)?
        }
        None => execute_ladder(client, &cp.id, mode, &scoped, config)?,
    };

    let bundle = if outcome.hit {
        let budget = compute_budget(
            budget_opts.model_max,
            budget_opts.reserved_buffer,
            &cp.prefix,
            &cp.suffix,
            tokenizer,
            budget_opts.per_file_override,
            budget_opts.top_k,
        );
        match assemble(&cp.id, &outcome.results, store, &budget, tokenizer) {
            Ok(bundle) => bundle,
            Err(err @ AssembleError::MissingFile { .. }) => {
                log::warn!("point {}: {err}; emitting empty context", cp.id);
                ContextBundle::empty(&cp.id)
            }
        }
    } else {
        ContextBundle::empty(&cp.id)
    };

    Ok(PointOutcome { outcome, bundle, duration: started.elapsed() })
}

/// Map `f` over `items` with at most `jobs` threads in flight, yielding
/// results in input order chunk by chunk. `f` must be Sync.
pub fn parallel_ordered<T: Sync, R: Send>(
    items: &[T],
    jobs: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let jobs = jobs.max(1);
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(jobs) {
        let mut results: Vec<Option<R>> = (0..chunk.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let mut handles = Vec::with_capacity(chunk.len());
            for item in chunk {
                handles.push(scope.spawn(|| f(item)));
            }
            for (slot, handle) in results.iter_mut().zip(handles) {
                *slot = Some(handle.join().expect("worker panicked"));
            }
        });
        out.extend(results.into_iter().map(|r| r.expect("filled above")));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_ordered_preserves_input_order() {
        let items: Vec<usize> = (0..23).collect();
        let doubled = parallel_ordered(&items, 4, |&x| {
            std::thread::sleep(Duration::from_millis((23 - x as u64) % 5));
            x * 2
        });
        assert_eq!(doubled, items.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
