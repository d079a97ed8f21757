//! The four subcommands: index, serve, retrieve, hitrate.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use scs_core::assemble::{CommandTokenCounter, DefaultTokenCounter, TokenCounter};
use scs_core::dataset::{read_dataset, FieldMap};
use scs_core::ladder::{LadderConfig, LadderError, SearchMode, VariantName};
use scs_core::lang::Language;
use scs_core::miner::CompletionPoint;
use scs_core::shard::{build_shard, write_shard};

use crate::client::HttpSearchClient;
use crate::pipeline::{parallel_ordered, retrieve_point, BudgetOptions, OutputLine, PointOutcome};
use crate::store::ShardStore;

/// Process exit codes: 0 success, 1 partial failure, 2 unreachable
/// server.
pub const EXIT_OK: u8 = 0;
pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_UNREACHABLE: u8 = 2;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Fatal(String),
    #[error("search service unreachable: {0}")]
    Unreachable(String),
}

impl CommandError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CommandError::Fatal(_) => EXIT_PARTIAL,
            CommandError::Unreachable(_) => EXIT_UNREACHABLE,
        }
    }
}

fn fatal(msg: impl Into<String>) -> CommandError {
    CommandError::Fatal(msg.into())
}

// ---- index ----

pub struct IndexOptions {
    pub dataset: PathBuf,
    pub repos: PathBuf,
    pub out: PathBuf,
    pub field_map: FieldMap,
}

/// Build one shard per distinct (repo, revision) of the dataset from
/// the file trees under `<repos>/<repo>/<revision>/`. Missing revision
/// directories are skipped with a warning and turn the exit code
/// nonzero.
pub fn cmd_index(opts: &IndexOptions, out_stream: &mut dyn Write) -> Result<u8, CommandError> {
    let points = read_dataset(&opts.dataset, &opts.field_map).map_err(|e| fatal(e.to_string()))?;

    let mut revisions: Vec<(String, String)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for p in &points {
        let key = (p.repo_id.clone(), p.revision_id.clone());
        if seen.insert(key.clone()) {
            revisions.push(key);
        }
    }

    std::fs::create_dir_all(&opts.out)
        .map_err(|e| fatal(format!("cannot create {}: {e}", opts.out.display())))?;

    let built_at = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let started = Instant::now();
    let mut per_repo: BTreeMap<String, usize> = BTreeMap::new();
    let mut skipped: Vec<(String, String)> = Vec::new();
    let mut total_files = 0usize;
    let mut used_names = std::collections::HashSet::new();

    for (repo, revision) in &revisions {
        let tree = opts.repos.join(repo).join(revision);
        if !tree.is_dir() {
            log::warn!("missing revision directory {}", tree.display());
            skipped.push((repo.clone(), revision.clone()));
            continue;
        }
        let files = collect_tree(&tree).map_err(|e| fatal(e))?;
        total_files += files.len();
        let mut shard =
            build_shard(repo, revision, files).map_err(|e| fatal(e.to_string()))?;
        shard.meta.built_at = built_at;

        let name = shard_file_name(repo, revision, &mut used_names);
        let path = opts.out.join(name);
        let mut sink = std::fs::File::create(&path)
            .map_err(|e| fatal(format!("cannot create {}: {e}", path.display())))?;
        write_shard(&shard, &mut sink).map_err(|e| fatal(e.to_string()))?;
        *per_repo.entry(repo.clone()).or_default() += 1;
    }

    writeln!(out_stream, "{:<40} revisions", "repo").ok();
    for (repo, count) in &per_repo {
        writeln!(out_stream, "{repo:<40} {count}").ok();
    }
    writeln!(
        out_stream,
        "total: {} revisions across {} repos, {} files, {} skipped ({:.1}s)",
        revisions.len() - skipped.len(),
        per_repo.len(),
        total_files,
        skipped.len(),
        started.elapsed().as_secs_f64(),
    )
    .ok();
    for (repo, revision) in &skipped {
        writeln!(out_stream, "skipped: {repo}@{revision} (no directory)").ok();
    }

    Ok(if skipped.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

fn collect_tree(root: &Path) -> Result<Vec<(String, Vec<u8>, Language)>, String> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(root).follow_links(false).sort_by_file_name() {
        let entry = entry.map_err(|e| e.to_string())?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .map_err(|e| e.to_string())?
            .to_string_lossy()
            .replace('\\', "/");
        let content = std::fs::read(entry.path())
            .map_err(|e| format!("cannot read {}: {e}", entry.path().display()))?;
        let language = Language::from_path(&rel);
        files.push((rel, content, language));
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(files)
}

fn shard_file_name(
    repo: &str,
    revision: &str,
    used: &mut std::collections::HashSet<String>,
) -> String {
    let sanitize = |s: &str| -> String {
        s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
    };
    let base = format!("{}__{}", sanitize(repo), sanitize(revision));
    let mut name = format!("{base}.shard");
    let mut n = 1;
    while !used.insert(name.clone()) {
        n += 1;
        name = format!("{base}-{n}.shard");
    }
    name
}

// ---- serve ----

pub fn cmd_serve(shards: &Path, bind: &str) -> Result<u8, CommandError> {
    let config = scs_service::ServiceConfig::default();
    scs_service::serve(shards, bind, config).map_err(|e| fatal(e.to_string()))?;
    Ok(EXIT_OK)
}

// ---- retrieve ----

pub struct RetrieveOptions {
    pub dataset: PathBuf,
    pub server: String,
    pub mode: SearchMode,
    pub out: PathBuf,
    pub shards: PathBuf,
    pub field_map: FieldMap,
    pub budget: BudgetOptions,
    pub ladder: LadderConfig,
    pub jobs: usize,
    pub resume: bool,
    pub tokenizer_cmd: Option<Vec<String>>,
    pub revision_order: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    completed: usize,
    last_id: String,
}

fn checkpoint_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.push_str(".checkpoint");
    out.with_file_name(name)
}

fn make_tokenizer(cmd: &Option<Vec<String>>) -> Box<dyn TokenCounter + Sync> {
    match cmd {
        Some(argv) => Box::new(CommandTokenCounter { argv: argv.clone() }),
        None => Box::new(DefaultTokenCounter),
    }
}

/// Read revision orders from a JSONL file of {repo, revision, order}.
pub fn read_revision_orders(path: &Path) -> Result<HashMap<(String, String), u64>, CommandError> {
    #[derive(Deserialize)]
    struct Row {
        repo: String,
        revision: String,
        order: u64,
    }
    let file = std::fs::File::open(path)
        .map_err(|e| fatal(format!("cannot read {}: {e}", path.display())))?;
    let mut out = HashMap::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| fatal(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line)
            .map_err(|e| fatal(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.insert((row.repo, row.revision), row.order);
    }
    Ok(out)
}

/// Batch retrieval: one output line per dataset record, written in
/// input order. An unreachable server aborts with a checkpoint file so
/// the run can resume.
pub fn cmd_retrieve(opts: &RetrieveOptions, out_stream: &mut dyn Write) -> Result<u8, CommandError> {
    let points = read_dataset(&opts.dataset, &opts.field_map).map_err(|e| fatal(e.to_string()))?;
    let store = ShardStore::load_dir(&opts.shards).map_err(fatal)?;
    let client = HttpSearchClient::new(&opts.server);
    let tokenizer = make_tokenizer(&opts.tokenizer_cmd);
    let orders = match &opts.revision_order {
        Some(path) => Some(Arc::new(read_revision_orders(path)?)),
        None => None,
    };

    // resume: skip records already present in the output file
    let mut completed = 0usize;
    if opts.resume && opts.out.exists() {
        let existing = std::fs::File::open(&opts.out).map_err(|e| fatal(e.to_string()))?;
        for (i, line) in std::io::BufReader::new(existing).lines().enumerate() {
            let line = line.map_err(|e| fatal(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: OutputLine = serde_json::from_str(&line)
                .map_err(|e| fatal(format!("existing output line {}: {e}", i + 1)))?;
            match points.get(completed) {
                Some(p) if p.id == parsed.id => completed += 1,
                _ => {
                    return Err(fatal(format!(
                        "existing output does not match dataset at line {}",
                        i + 1
                    )))
                }
            }
        }
        log::info!("resuming after {completed} completed records");
    }

    let mut sink = std::fs::OpenOptions::new()
        .create(true)
        .append(opts.resume)
        .write(true)
        .truncate(!opts.resume)
        .open(&opts.out)
        .map_err(|e| fatal(format!("cannot open {}: {e}", opts.out.display())))?;

    let remaining = &points[completed..];
    let run_one = |cp: &CompletionPoint| -> Result<PointOutcome, LadderError> {
        retrieve_point(
            cp,
            &store,
            &client,
            opts.mode,
            &opts.ladder,
            &opts.budget,
            tokenizer.as_ref(),
            orders.as_ref(),
        )
    };

    let started = Instant::now();
    let mut hits = 0usize;
    for chunk in remaining.chunks(opts.jobs.max(1)) {
        let outcomes = parallel_ordered(chunk, opts.jobs, run_one);
        for outcome in outcomes {
            match outcome {
                Ok(point) => {
                    let line = OutputLine::from_outcome(&point);
                    hits += line.hit as usize;
                    let json = serde_json::to_string(&line).map_err(|e| fatal(e.to_string()))?;
                    writeln!(sink, "{json}").map_err(|e| fatal(e.to_string()))?;
                    completed += 1;
                    write_checkpoint(&opts.out, completed, &line.id);
                }
                Err(LadderError::ClientUnreachable) => {
                    sink.flush().ok();
                    let last_id =
                        completed.checked_sub(1).map(|i| points[i].id.clone()).unwrap_or_default();
                    write_checkpoint(&opts.out, completed, &last_id);
                    return Err(CommandError::Unreachable(format!(
                        "{} (checkpoint at {} records, resume with --resume)",
                        opts.server, completed
                    )));
                }
                Err(e @ LadderError::MalformedQuery { .. }) => {
                    return Err(fatal(e.to_string()));
                }
            }
        }
    }
    sink.flush().map_err(|e| fatal(e.to_string()))?;

    writeln!(
        out_stream,
        "retrieved {} points ({} hits, {} misses) in {:.1}s [{}]",
        completed,
        hits,
        completed - hits,
        started.elapsed().as_secs_f64(),
        opts.mode.as_str(),
    )
    .ok();
    Ok(EXIT_OK)
}

fn write_checkpoint(out: &Path, completed: usize, last_id: &str) {
    let ckpt = Checkpoint { completed, last_id: last_id.to_string() };
    if let Ok(json) = serde_json::to_string(&ckpt) {
        let _ = std::fs::write(checkpoint_path(out), json);
    }
}

// ---- hitrate ----

pub struct HitrateOptions {
    pub dataset: PathBuf,
    pub server: String,
    pub shards: PathBuf,
    pub field_map: FieldMap,
    pub budget: BudgetOptions,
    pub ladder: LadderConfig,
    pub jobs: usize,
    pub tokenizer_cmd: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ModeReport {
    pub hit: usize,
    pub miss: usize,
    pub variant_wins: BTreeMap<String, usize>,
    pub wall_time_s: f64,
    /// (point id, seconds), input order.
    pub point_timings: Vec<(String, f64)>,
}

/// Hit/miss counts per mode plus per-variant win histogram.
#[derive(Debug, Clone, Serialize)]
pub struct HitRateReport {
    pub single: ModeReport,
    pub cross: ModeReport,
    pub total_wall_time_s: f64,
}

impl HitRateReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:>14} {:>14}\n",
            "", "single-shard", "cross-shard"
        ));
        out.push_str(&format!("{:<12} {:>14} {:>14}\n", "hit", self.single.hit, self.cross.hit));
        out.push_str(&format!(
            "{:<12} {:>14} {:>14}\n",
            "miss", self.single.miss, self.cross.miss
        ));
        out.push_str("\nvariant wins:\n");
        for name in VariantName::ALL {
            let s = self.single.variant_wins.get(name.as_str()).copied().unwrap_or(0);
            let c = self.cross.variant_wins.get(name.as_str()).copied().unwrap_or(0);
            if s > 0 || c > 0 {
                out.push_str(&format!("  {:<28} {:>6} {:>6}\n", name.as_str(), s, c));
            }
        }
        out.push_str(&format!(
            "\nwall time: single {:.1}s, cross {:.1}s (total {:.1}s)\n",
            self.single.wall_time_s, self.cross.wall_time_s, self.total_wall_time_s
        ));
        out
    }
}

/// Run the dataset in both modes and collect the report.
pub fn run_hitrate(opts: &HitrateOptions) -> Result<HitRateReport, CommandError> {
    let points = read_dataset(&opts.dataset, &opts.field_map).map_err(|e| fatal(e.to_string()))?;
    let store = ShardStore::load_dir(&opts.shards).map_err(fatal)?;
    let client = HttpSearchClient::new(&opts.server);
    let tokenizer = make_tokenizer(&opts.tokenizer_cmd);

    let run_mode = |mode: SearchMode| -> Result<ModeReport, CommandError> {
        let started = Instant::now();
        let outcomes = parallel_ordered(&points, opts.jobs, |cp| {
            retrieve_point(
                cp,
                &store,
                &client,
                mode,
                &opts.ladder,
                &opts.budget,
                tokenizer.as_ref(),
                None,
            )
        });
        let mut report = ModeReport::default();
        for (cp, outcome) in points.iter().zip(outcomes) {
            let point = match outcome {
                Ok(p) => p,
                Err(LadderError::ClientUnreachable) => {
                    return Err(CommandError::Unreachable(opts.server.clone()))
                }
                Err(e) => return Err(fatal(e.to_string())),
            };
            if point.outcome.hit {
                report.hit += 1;
                if let Some(win) = point.outcome.winning_variant {
                    *report.variant_wins.entry(win.as_str().to_string()).or_default() += 1;
                }
            } else {
                report.miss += 1;
            }
            report.point_timings.push((cp.id.clone(), point.duration.as_secs_f64()));
        }
        report.wall_time_s = started.elapsed().as_secs_f64();
        Ok(report)
    };

    let single = run_mode(SearchMode::SingleShard)?;
    let cross = run_mode(SearchMode::CrossShard)?;
    Ok(HitRateReport {
        total_wall_time_s: single.wall_time_s + cross.wall_time_s,
        single,
        cross,
    })
}

/// Run the dataset in both modes and print a hit/miss table plus the
/// per-variant win histogram. Exits nonzero if the cross-shard hit
/// count falls below the single-shard one.
pub fn cmd_hitrate(opts: &HitrateOptions, out_stream: &mut dyn Write) -> Result<u8, CommandError> {
    let report = run_hitrate(opts)?;
    write!(out_stream, "{}", report.render()).ok();

    if report.cross.hit < report.single.hit {
        writeln!(
            out_stream,
            "WARNING: cross-shard hits ({}) below single-shard hits ({})",
            report.cross.hit, report.single.hit
        )
        .ok();
        return Ok(EXIT_PARTIAL);
    }
    writeln!(
        out_stream,
        "cross-shard hits ({}) >= single-shard hits ({}): ok",
        report.cross.hit, report.single.hit
    )
    .ok();
    Ok(EXIT_OK)
}

pub fn make_ladder_config(
    timeout_ms: u64,
    max_retries: u32,
    max_results: usize,
) -> LadderConfig {
    LadderConfig {
        timeout_per_request: Duration::from_millis(timeout_ms),
        max_retries,
        max_results_per_query: max_results,
        ..LadderConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shard_file_names_are_sanitized_and_unique() {
        let mut used = std::collections::HashSet::new();
        assert_eq!(shard_file_name("proj/A", "r 1", &mut used), "proj_A__r_1.shard");
        assert_eq!(shard_file_name("proj_A", "r_1", &mut used), "proj_A__r_1-2.shard");
        assert_eq!(shard_file_name("b", "r.2", &mut used), "b__r.2.shard");
    }

    #[test]
    fn checkpoint_path_appends_suffix() {
        assert_eq!(
            checkpoint_path(Path::new("/tmp/out.jsonl")),
            PathBuf::from("/tmp/out.jsonl.checkpoint")
        );
    }
}
