//! Post-processing of search results into a token-budgeted context
//! bundle: group by file, prefer whole files that fit the per-file
//! budget, merge overlapping snippets otherwise, then greedily admit
//! candidates best-score-first under the total constraint.

use std::collections::BTreeMap;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::{is_ident_byte, Language};
use crate::query::SearchResult;
use crate::shard::{FileRecord, Shard};

/// Counts tokens of a text. Implementations must be deterministic;
/// budget safety holds for any counter.
pub trait TokenCounter {
    fn count(&self, text: &str) -> usize;
}

/// Dependency-free counter: each maximal run of identifier characters
/// is one token; each run of other non-whitespace bytes counts
/// ceil(len/2) tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct DefaultTokenCounter;

impl TokenCounter for DefaultTokenCounter {
    fn count(&self, text: &str) -> usize {
        let bytes = text.as_bytes();
        let mut tokens = 0usize;
        let mut i = 0usize;
        while i < bytes.len() {
            let b = bytes[i];
            if b.is_ascii_whitespace() {
                i += 1;
            } else if is_ident_byte(b) {
                while i < bytes.len() && is_ident_byte(bytes[i]) {
                    i += 1;
                }
                tokens += 1;
            } else {
                let start = i;
                while i < bytes.len() && !bytes[i].is_ascii_whitespace() && !is_ident_byte(bytes[i])
                {
                    i += 1;
                }
                tokens += (i - start).div_ceil(2);
            }
        }
        tokens
    }
}

/// Delegates counting to an external command (text on stdin, integer on
/// stdout). Any failure falls back to the default counter with a
/// warning.
#[derive(Debug, Clone)]
pub struct CommandTokenCounter {
    pub argv: Vec<String>,
}

impl TokenCounter for CommandTokenCounter {
    fn count(&self, text: &str) -> usize {
        match self.run(text) {
            Ok(n) => n,
            Err(err) => {
                log::warn!("token-count command failed ({err}); using default counter");
                DefaultTokenCounter.count(text)
            }
        }
    }
}

impl CommandTokenCounter {
    fn run(&self, text: &str) -> Result<usize, String> {
        let (program, args) = self.argv.split_first().ok_or("empty command")?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        {
            use std::io::Write;
            let stdin = child.stdin.as_mut().ok_or("no stdin")?;
            stdin.write_all(text.as_bytes()).map_err(|e| e.to_string())?;
        }
        let out = child.wait_with_output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("exit status {}", out.status));
        }
        String::from_utf8_lossy(&out.stdout)
            .trim()
            .parse::<usize>()
            .map_err(|e| e.to_string())
    }
}

/// Count tokens of `text` with the given adapter.
pub fn count_tokens(text: &str, tokenizer: &dyn TokenCounter) -> usize {
    tokenizer.count(text)
}

/// Token room for retrieved context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBudget {
    /// Model context size M.
    pub model_max: u64,
    /// Generation buffer B.
    pub reserved_buffer: u64,
    pub prefix_suffix_tokens: u64,
    /// T = M - prefix_suffix_tokens - B; zero or negative means no room.
    pub total_constraint: i64,
    /// Per-file budget R.
    pub per_file_budget: u64,
    /// At most this many files/snippets are admitted.
    pub top_k_files: u64,
}

/// Derive the budget for one completion point.
///
/// `per_file_override` replaces the default R = T/2 (floored, at least
/// 1); either way R is clamped to T when T is positive.
pub fn compute_budget(
    model_max: u64,
    reserved_buffer: u64,
    prefix: &str,
    suffix: &str,
    tokenizer: &dyn TokenCounter,
    per_file_override: Option<u64>,
    top_k_files: u64,
) -> TokenBudget {
    let prefix_suffix_tokens =
        (tokenizer.count(prefix) + tokenizer.count(suffix)) as u64;
    let total_constraint =
        model_max as i64 - prefix_suffix_tokens as i64 - reserved_buffer as i64;
    let default_r = (total_constraint / 2).max(1) as u64;
    let mut per_file_budget = per_file_override.unwrap_or(default_r).max(1);
    if total_constraint > 0 {
        per_file_budget = per_file_budget.min(total_constraint as u64);
    }
    TokenBudget {
        model_max,
        reserved_buffer,
        prefix_suffix_tokens,
        total_constraint,
        per_file_budget,
        top_k_files,
    }
}

/// A contiguous run of lines from one file version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snippet {
    pub path: String,
    pub repo_id: String,
    pub revision_id: String,
    pub line_start: u32,
    pub line_end: u32,
    pub text: String,
    pub score: f64,
    pub token_count: usize,
}

/// The final ordered, budgeted concatenation for one completion point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub cp_id: String,
    pub snippets: Vec<Snippet>,
    pub total_tokens: usize,
    pub rendered: String,
}

impl ContextBundle {
    pub fn empty(cp_id: &str) -> ContextBundle {
        ContextBundle {
            cp_id: cp_id.to_string(),
            snippets: Vec::new(),
            total_tokens: 0,
            rendered: String::new(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AssembleError {
    /// A result references a file the content source does not have —
    /// the index and the search service disagree.
    #[error("file {path} of {repo_id}@{revision_id} missing from content source")]
    MissingFile { repo_id: String, revision_id: String, path: String },
}

/// Where file contents come from at assembly time.
pub trait ContentSource {
    fn file(&self, repo_id: &str, revision_id: &str, path: &str) -> Option<&FileRecord>;
}

impl ContentSource for [Shard] {
    fn file(&self, repo_id: &str, revision_id: &str, path: &str) -> Option<&FileRecord> {
        self.iter()
            .find(|s| s.meta.repo_id == repo_id && s.meta.revision_id == revision_id)
            .and_then(|s| s.file_by_path(path))
    }
}

impl ContentSource for Vec<Shard> {
    fn file(&self, repo_id: &str, revision_id: &str, path: &str) -> Option<&FileRecord> {
        self.as_slice().file(repo_id, revision_id, path)
    }
}

/// Merge snippets of one (path, revision) whose line ranges intersect
/// or are adjacent (gap <= 1). The union spans min(start)..max(end),
/// keeps the higher score, and is re-tokenized. Output is sorted by
/// line_start; merging is idempotent and independent of input order.
pub fn merge_overlaps(snippets: Vec<Snippet>, tokenizer: &dyn TokenCounter) -> Vec<Snippet> {
    if snippets.len() <= 1 {
        return snippets;
    }
    let mut sorted = snippets;
    sorted.sort_by(|a, b| {
        a.line_start
            .cmp(&b.line_start)
            .then_with(|| a.line_end.cmp(&b.line_end))
    });

    let mut merged: Vec<Snippet> = Vec::with_capacity(sorted.len());
    for snip in sorted {
        match merged.last_mut() {
            Some(last) if snip.line_start <= last.line_end.saturating_add(1) => {
                *last = union_snippet(last, &snip, tokenizer);
            }
            _ => merged.push(snip),
        }
    }
    merged
}

fn union_snippet(a: &Snippet, b: &Snippet, tokenizer: &dyn TokenCounter) -> Snippet {
    let start = a.line_start.min(b.line_start);
    let end = a.line_end.max(b.line_end);
    // collect line texts by number from both inputs; same file, so
    // overlapping lines agree
    let mut lines: BTreeMap<u32, &str> = BTreeMap::new();
    for s in [a, b] {
        for (i, line) in s.text.lines().enumerate() {
            lines.insert(s.line_start + i as u32, line);
        }
    }
    let text = lines.values().copied().collect::<Vec<_>>().join("\n");
    let token_count = tokenizer.count(&text);
    Snippet {
        path: a.path.clone(),
        repo_id: a.repo_id.clone(),
        revision_id: a.revision_id.clone(),
        line_start: start,
        line_end: end,
        text,
        score: a.score.max(b.score),
        token_count,
    }
}

/// Build the context bundle for one completion point.
///
/// Results are grouped by containing file. A file whose full text fits
/// the per-file budget R becomes a whole-file candidate; otherwise its
/// merged snippets are candidates, each truncated to R by cutting whole
/// lines from the end. Candidates are admitted best-score-first while
/// the running total stays within T and fewer than k are admitted;
/// admission stops at the first candidate that does not fit, so the
/// admitted set is a prefix of the candidate order and enlarging T
/// never evicts anything.
pub fn assemble(
    cp_id: &str,
    results: &[SearchResult],
    source: &dyn ContentSource,
    budget: &TokenBudget,
    tokenizer: &dyn TokenCounter,
) -> Result<ContextBundle, AssembleError> {
    if budget.total_constraint <= 0 {
        return Ok(ContextBundle::empty(cp_id));
    }
    let t = budget.total_constraint as usize;
    let r = budget.per_file_budget as usize;
    let k = budget.top_k_files as usize;

    let mut sorted: Vec<&SearchResult> = results.iter().collect();
    sorted.sort_by(|a, b| crate::query::result_order(a, b));

    // group by file, first-seen (i.e. best-score) order
    let mut group_order: Vec<(String, String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String, String), Vec<&SearchResult>> = BTreeMap::new();
    for res in sorted {
        let key = (res.repo_id.clone(), res.revision_id.clone(), res.path.clone());
        if !groups.contains_key(&key) {
            group_order.push(key.clone());
        }
        groups.entry(key).or_default().push(res);
    }

    let mut candidates: Vec<Snippet> = Vec::new();
    for key in group_order {
        let (repo_id, revision_id, path) = &key;
        let file = source.file(repo_id, revision_id, path).ok_or_else(|| {
            AssembleError::MissingFile {
                repo_id: repo_id.clone(),
                revision_id: revision_id.clone(),
                path: path.clone(),
            }
        })?;
        let group = &groups[&key];
        let best_score = group
            .iter()
            .map(|r| r.score)
            .fold(f64::NEG_INFINITY, f64::max);

        let whole_text = file_text(file, 1, file.line_count() as u32);
        let whole_tokens = tokenizer.count(&whole_text);
        if whole_tokens <= r {
            candidates.push(Snippet {
                path: path.clone(),
                repo_id: repo_id.clone(),
                revision_id: revision_id.clone(),
                line_start: 1,
                line_end: file.line_count() as u32,
                text: whole_text,
                score: best_score,
                token_count: whole_tokens,
            });
            continue;
        }

        let raw: Vec<Snippet> = group
            .iter()
            .map(|res| {
                let end = res.line_end.min(file.line_count() as u32).max(res.line_start);
                let text = file_text(file, res.line_start, end);
                let token_count = tokenizer.count(&text);
                Snippet {
                    path: path.clone(),
                    repo_id: repo_id.clone(),
                    revision_id: revision_id.clone(),
                    line_start: res.line_start,
                    line_end: end,
                    text,
                    score: res.score,
                    token_count,
                }
            })
            .collect();
        for snip in merge_overlaps(raw, tokenizer) {
            if let Some(truncated) = truncate_to(snip, r, tokenizer) {
                candidates.push(truncated);
            }
        }
    }

    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.path.cmp(&b.path))
            .then_with(|| a.line_start.cmp(&b.line_start))
            .then_with(|| a.revision_id.cmp(&b.revision_id))
    });

    let mut admitted: Vec<Snippet> = Vec::new();
    let mut total = 0usize;
    for cand in candidates {
        if admitted.len() >= k {
            break;
        }
        if total + cand.token_count > t {
            break;
        }
        total += cand.token_count;
        admitted.push(cand);
    }

    let mut rendered = String::new();
    for snip in &admitted {
        let token = Language::from_path(&snip.path).comment_token();
        rendered.push_str(&format!(
            "{token} {}:{}-{}@{}\n{}\n",
            snip.path, snip.line_start, snip.line_end, snip.revision_id, snip.text
        ));
    }

    Ok(ContextBundle {
        cp_id: cp_id.to_string(),
        snippets: admitted,
        total_tokens: total,
        rendered,
    })
}

fn file_text(file: &FileRecord, line_start: u32, line_end: u32) -> String {
    let mut lines = Vec::new();
    for n in line_start..=line_end {
        match file.line(n as usize) {
            Some(l) => lines.push(String::from_utf8_lossy(l).into_owned()),
            None => break,
        }
    }
    lines.join("\n")
}

/// Cut whole lines from the end until the snippet fits `limit` tokens.
/// Returns None when nothing fits.
fn truncate_to(snippet: Snippet, limit: usize, tokenizer: &dyn TokenCounter) -> Option<Snippet> {
    if snippet.token_count <= limit {
        return Some(snippet);
    }
    let mut lines: Vec<&str> = snippet.text.lines().collect();
    while !lines.is_empty() {
        lines.pop();
        let text = lines.join("\n");
        let tokens = tokenizer.count(&text);
        if tokens <= limit {
            if lines.is_empty() {
                return None;
            }
            return Some(Snippet {
                line_end: snippet.line_start + lines.len() as u32 - 1,
                text,
                token_count: tokens,
                ..snippet
            });
        }
    }
    None
}
