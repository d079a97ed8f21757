//! Long-running search service: loads every shard in a directory at
//! startup and serves them read-only.
//!
//! Endpoints:
//! - `POST /search` — [`scs_core::SearchRequest`] in, [`scs_core::SearchResponse`] out.
//!   `repo:`/`rev:` filters select the shard subset: with `rev:` a single
//!   shard, without it every shard of the repo (cross-shard).
//! - `GET /health` — liveness plus shard count.
//! - `GET /shards` — identities of the loaded shards.
//!
//! Responses: 400 for parse errors (body carries byte position), 404
//! when every repo the query names is unknown, 503 with
//! `overloaded: true` past the concurrency limit (the signal clients
//! retry on). `SCS_MAX_CONCURRENCY` overrides the in-flight limit.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use thiserror::Error;
use tokio::sync::oneshot;

use scs_core::api::{ErrorResponse, HealthResponse, SearchRequest, SearchResponse, SearchStats};
use scs_core::query::{parse_query, plan_trigrams, result_order, FilterKind, QueryNode};
use scs_core::shard::{read_shard, search_shard_with_stats, Shard};
use scs_core::ShardInfo;

pub const MAX_CONCURRENCY_ENV: &str = "SCS_MAX_CONCURRENCY";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot read shard directory {dir}: {source}")]
    Dir { dir: String, source: std::io::Error },
    #[error("cannot load shard {path}: {message}")]
    BadShard { path: String, message: String },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable set of shards, ordered by (repo, revision) for stable
/// iteration.
pub struct ShardSet {
    shards: Vec<Shard>,
}

impl ShardSet {
    pub fn from_shards(mut shards: Vec<Shard>) -> ShardSet {
        shards.sort_by(|a, b| {
            (&a.meta.repo_id, &a.meta.revision_id).cmp(&(&b.meta.repo_id, &b.meta.revision_id))
        });
        ShardSet { shards }
    }

    /// Load every `*.shard` file in a directory.
    pub fn load_dir(dir: &Path) -> Result<ShardSet, ServeError> {
        let entries = std::fs::read_dir(dir)
            .map_err(|source| ServeError::Dir { dir: dir.display().to_string(), source })?;
        let mut shards = Vec::new();
        for entry in entries {
            let entry = entry?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("shard") {
                continue;
            }
            let mut file = std::fs::File::open(&path)?;
            let shard = read_shard(&mut file).map_err(|e| ServeError::BadShard {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            shards.push(shard);
        }
        log::info!("loaded {} shards from {}", shards.len(), dir.display());
        Ok(ShardSet::from_shards(shards))
    }

    pub fn len(&self) -> usize {
        self.shards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shards.is_empty()
    }

    pub fn infos(&self) -> Vec<ShardInfo> {
        self.shards
            .iter()
            .map(|s| ShardInfo {
                repo_id: s.meta.repo_id.clone(),
                revision_id: s.meta.revision_id.clone(),
                file_count: s.meta.file_count,
            })
            .collect()
    }

    pub fn has_repo(&self, repo_id: &str) -> bool {
        self.shards.iter().any(|s| s.meta.repo_id == repo_id)
    }

    /// Shards the query's scope filters do not rule out.
    pub fn select(&self, tree: &QueryNode) -> Vec<&Shard> {
        self.shards.iter().filter(|s| scope_matches(tree, s)).collect()
    }
}

/// Optimistic partial evaluation of scope filters against shard
/// identity: anything that is not a repo/rev filter may still match.
fn scope_matches(node: &QueryNode, shard: &Shard) -> bool {
    match node {
        QueryNode::Filter { kind: FilterKind::Repo, argument, .. } => {
            shard.meta.repo_id == *argument
        }
        QueryNode::Filter { kind: FilterKind::Revision, argument, .. } => {
            shard.meta.revision_id == *argument
        }
        QueryNode::And(children) => children.iter().all(|c| scope_matches(c, shard)),
        QueryNode::Or(children) => children.iter().any(|c| scope_matches(c, shard)),
        _ => true,
    }
}

fn repo_filters(node: &QueryNode, out: &mut Vec<String>) {
    match node {
        QueryNode::Filter { kind: FilterKind::Repo, argument, .. } => {
            out.push(argument.clone());
        }
        QueryNode::And(children) | QueryNode::Or(children) => {
            for c in children {
                repo_filters(c, out);
            }
        }
        _ => {}
    }
}

/// In-flight limiter with a bounded wait queue: requests beyond the
/// limit wait while the queue has room, otherwise they are answered 503.
struct Gate {
    semaphore: Arc<tokio::sync::Semaphore>,
    waiting: AtomicUsize,
    max_waiting: usize,
}

impl Gate {
    fn new(limit: usize, max_waiting: usize) -> Gate {
        Gate {
            semaphore: Arc::new(tokio::sync::Semaphore::new(limit.max(1))),
            waiting: AtomicUsize::new(0),
            max_waiting,
        }
    }

    async fn enter(&self) -> Option<tokio::sync::OwnedSemaphorePermit> {
        if let Ok(permit) = self.semaphore.clone().try_acquire_owned() {
            return Some(permit);
        }
        if self.waiting.fetch_add(1, Ordering::SeqCst) >= self.max_waiting {
            self.waiting.fetch_sub(1, Ordering::SeqCst);
            return None;
        }
        let permit = self.semaphore.clone().acquire_owned().await.ok();
        self.waiting.fetch_sub(1, Ordering::SeqCst);
        permit
    }
}

#[derive(Clone)]
pub struct AppState {
    shards: Arc<ShardSet>,
    gate: Arc<Gate>,
}

#[derive(Debug, Clone, Copy)]
pub struct ServiceConfig {
    /// Concurrent searches allowed in flight.
    pub max_concurrency: usize,
    /// Requests allowed to wait for a permit before 503.
    pub queue_depth: usize,
}

impl Default for ServiceConfig {
    fn default() -> ServiceConfig {
        let parallelism = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(4);
        let max_concurrency = std::env::var(MAX_CONCURRENCY_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(2 * parallelism);
        ServiceConfig { max_concurrency, queue_depth: max_concurrency }
    }
}

pub fn app_state(shards: ShardSet, config: ServiceConfig) -> AppState {
    AppState {
        shards: Arc::new(shards),
        gate: Arc::new(Gate::new(config.max_concurrency, config.queue_depth)),
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/search", post(search_handler))
        .route("/health", get(health_handler))
        .route("/shards", get(shards_handler))
        .with_state(state)
}

async fn health_handler(State(state): State<AppState>) -> Json<HealthResponse> {
    Json(HealthResponse { status: "ok".into(), shard_count: state.shards.len() })
}

async fn shards_handler(State(state): State<AppState>) -> Json<Vec<ShardInfo>> {
    Json(state.shards.infos())
}

async fn search_handler(State(state): State<AppState>, Json(req): Json<SearchRequest>) -> Response {
    let Some(_permit) = state.gate.enter().await else {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(SearchResponse::overloaded()))
            .into_response();
    };

    let tree = match parse_query(&req.query) {
        Ok(tree) => tree,
        Err(e) => {
            let body = ErrorResponse::with_position(e.message.clone(), e.position);
            return (StatusCode::BAD_REQUEST, Json(body)).into_response();
        }
    };

    let mut repos = Vec::new();
    repo_filters(&tree, &mut repos);
    if !repos.is_empty() && repos.iter().all(|r| !state.shards.has_repo(r)) {
        let body = ErrorResponse::new(format!("unknown repo: {}", repos.join(", ")));
        return (StatusCode::NOT_FOUND, Json(body)).into_response();
    }

    let started = Instant::now();
    let state2 = state.clone();
    let max_results = req.max_results;
    let outcome = tokio::task::spawn_blocking(move || {
        let compiled = plan_trigrams(&tree);
        let selected = state2.shards.select(&tree);
        let mut stats = SearchStats { shards_searched: selected.len(), ..Default::default() };
        let mut results = Vec::new();
        for shard in selected {
            let (mut rs, st) = search_shard_with_stats(shard, &compiled, max_results);
            stats.files_considered += st.files_considered;
            stats.files_matched += st.files_matched;
            results.append(&mut rs);
        }
        results.sort_by(result_order);
        results.truncate(max_results);
        (results, stats)
    })
    .await;

    match outcome {
        Ok((results, mut stats)) => {
            stats.duration_ms = started.elapsed().as_secs_f64() * 1000.0;
            Json(SearchResponse { results, stats, overloaded: false }).into_response()
        }
        Err(e) => {
            log::error!("search task failed: {e}");
            let body = ErrorResponse::new("internal error");
            (StatusCode::INTERNAL_SERVER_ERROR, Json(body)).into_response()
        }
    }
}

/// A running server bound to `addr`, stoppable from tests.
pub struct ServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn stop(mut self) {
        self.shutdown_now();
    }

    fn shutdown_now(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown_now();
    }
}

/// Spawn the service on its own runtime thread; returns once the
/// listener is bound.
pub fn spawn_server(
    shards: ShardSet,
    bind: &str,
    config: ServiceConfig,
) -> Result<ServerHandle, ServeError> {
    let state = app_state(shards, config);
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let bind = bind.to_string();

    let thread = std::thread::spawn(move || {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .expect("tokio runtime");
        runtime.block_on(async move {
            let listener = match tokio::net::TcpListener::bind(&bind).await {
                Ok(l) => l,
                Err(e) => {
                    let _ = addr_tx.send(Err(ServeError::Bind { addr: bind, source: e }));
                    return;
                }
            };
            let addr = listener.local_addr().expect("local addr");
            let _ = addr_tx.send(Ok(addr));
            let app = router(state);
            let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                let _ = shutdown_rx.await;
            });
            if let Err(e) = serve.await {
                log::error!("server error: {e}");
            }
        });
    });

    match addr_rx.recv() {
        Ok(Ok(addr)) => Ok(ServerHandle { addr, shutdown: Some(shutdown_tx), thread: Some(thread) }),
        Ok(Err(e)) => {
            let _ = thread.join();
            Err(e)
        }
        Err(_) => {
            let _ = thread.join();
            Err(ServeError::Io(std::io::Error::other("server thread died before binding")))
        }
    }
}

/// Load shards from `dir` and serve until the process is stopped.
pub fn serve(dir: &Path, bind: &str, config: ServiceConfig) -> Result<(), ServeError> {
    let shards = ShardSet::load_dir(dir)?;
    log::info!(
        "serving {} shards on {bind} (max concurrency {})",
        shards.len(),
        config.max_concurrency
    );
    let handle = spawn_server(shards, bind, config)?;
    eprintln!("listening on http://{}", handle.addr);
    // block forever; the handle keeps the server thread alive
    if let Some(t) = {
        let mut h = handle;
        h.shutdown = None; // do not shut down on drop
        h.thread.take()
    } {
        let _ = t.join();
    }
    Ok(())
}
