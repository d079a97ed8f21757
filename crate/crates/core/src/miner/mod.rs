//! Diff reconstruction and identifier mining around a completion point.
//!
//! The prefix+suffix concatenation is diffed against the original file;
//! the resulting diff lines are the sole source of query terms, mined in
//! three families: function/class names, navigation expressions and all
//! identifiers, each ranked by frequency then proximity to the
//! completion line.

mod diff;

pub use diff::{edit_script, EditOp};

use serde::{Deserialize, Serialize};

use crate::lang::{identifiers, is_ident_byte, Language};
use crate::shard::declaration_on_line;

/// One benchmark datapoint: a file split at the completion location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionPoint {
    pub id: String,
    pub repo_id: String,
    pub revision_id: String,
    pub path: String,
    pub prefix: String,
    pub suffix: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineOrigin {
    Added,
    Removed,
    ContextWindow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffLine {
    pub text: String,
    pub origin: LineOrigin,
    /// 1-based line in the modified file. Removed lines inherit the
    /// number of the nearest following kept line.
    pub modified_line_no: Option<u32>,
}

/// The diff string: changed lines plus up to 3 unchanged context lines
/// around each hunk. When nothing changed, a 7-line window centered on
/// the completion line stands in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffContext {
    pub diff_lines: Vec<DiffLine>,
    pub completion_line: u32,
}

const HUNK_CONTEXT: usize = 3;
const FALLBACK_WINDOW: usize = 7;

/// Rebuild the modified file and locate the completion line.
///
/// Returns `(prefix ++ suffix, 1 + newlines in prefix)`.
pub fn reconstruct_modified(cp: &CompletionPoint) -> (String, u32) {
    let mut text = String::with_capacity(cp.prefix.len() + cp.suffix.len());
    text.push_str(&cp.prefix);
    text.push_str(&cp.suffix);
    let completion_line = 1 + cp.prefix.bytes().filter(|&b| b == b'\n').count() as u32;
    (text, completion_line)
}

/// Line-level diff of `original` vs `modified` with hunk context.
pub fn compute_diff(original: &str, modified: &str, completion_line: u32) -> DiffContext {
    let orig_lines: Vec<&str> = original.lines().collect();
    let mod_lines: Vec<&str> = modified.lines().collect();

    let ops = edit_script(&orig_lines, &mod_lines);
    let changed = ops.iter().any(|o| !matches!(o, EditOp::Equal(_, _)));

    if !changed {
        // no-edit fallback: a window of lines around the completion point
        let center = completion_line as usize;
        let half = FALLBACK_WINDOW / 2;
        let lo = center.saturating_sub(half).max(1);
        let hi = (center + half).min(mod_lines.len());
        let diff_lines = (lo..=hi)
            .filter_map(|n| mod_lines.get(n - 1).map(|&t| (n, t)))
            .map(|(n, t)| DiffLine {
                text: t.to_string(),
                origin: LineOrigin::ContextWindow,
                modified_line_no: Some(n as u32),
            })
            .collect();
        return DiffContext { diff_lines, completion_line };
    }

    // mark kept (Equal) ops within HUNK_CONTEXT of any edit
    let mut keep = vec![false; ops.len()];
    for (i, op) in ops.iter().enumerate() {
        if matches!(op, EditOp::Equal(_, _)) {
            continue;
        }
        let lo = i.saturating_sub(HUNK_CONTEXT);
        let hi = (i + HUNK_CONTEXT).min(ops.len() - 1);
        for flag in keep.iter_mut().take(hi + 1).skip(lo) {
            *flag = true;
        }
    }

    // the modified-line number a removed line inherits: nearest following
    // kept line; falls back to the last modified line
    let last_mod_line = mod_lines.len().max(1) as u32;
    let mut following_mod: Vec<u32> = vec![last_mod_line; ops.len()];
    let mut next = last_mod_line;
    for i in (0..ops.len()).rev() {
        match ops[i] {
            EditOp::Equal(_, j) | EditOp::Insert(j) => next = (j + 1) as u32,
            EditOp::Delete(_) => {}
        }
        following_mod[i] = next;
    }

    let mut diff_lines = Vec::new();
    for (i, op) in ops.iter().enumerate() {
        match *op {
            EditOp::Insert(j) => diff_lines.push(DiffLine {
                text: mod_lines[j].to_string(),
                origin: LineOrigin::Added,
                modified_line_no: Some((j + 1) as u32),
            }),
            EditOp::Delete(oi) => diff_lines.push(DiffLine {
                text: orig_lines[oi].to_string(),
                origin: LineOrigin::Removed,
                modified_line_no: Some(following_mod[i]),
            }),
            EditOp::Equal(_, j) if keep[i] => diff_lines.push(DiffLine {
                text: mod_lines[j].to_string(),
                origin: LineOrigin::ContextWindow,
                modified_line_no: Some((j + 1) as u32),
            }),
            EditOp::Equal(_, _) => {}
        }
    }
    DiffContext { diff_lines, completion_line }
}

/// Function/class names: identifiers at a declaration or in call
/// position (immediately before `(`), first-appearance order.
pub fn gather_functions_classes(diff: &DiffContext, language: Language) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for line in &diff.diff_lines {
        if let Some((name, _)) = declaration_on_line(&line.text, language) {
            if !language.is_keyword(name) && seen.insert(name.to_string()) {
                out.push(name.to_string());
            }
        }
        let bytes = line.text.as_bytes();
        for (off, ident) in identifiers(&line.text) {
            let after = off + ident.len();
            if bytes.get(after) == Some(&b'(')
                && !language.is_keyword(ident)
                && seen.insert(ident.to_string())
            {
                out.push(ident.to_string());
            }
        }
    }
    out
}

/// Navigation expressions: maximal dotted identifier chains `a.b.c`.
/// With `unpack` the chains are split into their component identifiers
/// (keywords dropped); otherwise whole chains are returned.
pub fn gather_navigation(diff: &DiffContext, unpack: bool, language: Language) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for line in &diff.diff_lines {
        for chain in navigation_chains(&line.text) {
            if unpack {
                for part in chain.split('.') {
                    if !language.is_keyword(part) && seen.insert(part.to_string()) {
                        out.push(part.to_string());
                    }
                }
            } else if seen.insert(chain.clone()) {
                out.push(chain);
            }
        }
    }
    out
}

/// Maximal `ident(.ident)+` chains in a line.
fn navigation_chains(line: &str) -> Vec<String> {
    let bytes = line.as_bytes();
    let mut chains = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut last_end = 0usize;

    for (off, ident) in identifiers(line) {
        let continues = !current.is_empty()
            && off == last_end + 1
            && bytes.get(last_end) == Some(&b'.');
        if !continues {
            if current.len() >= 2 {
                chains.push(current.join("."));
            }
            current.clear();
        }
        current.push(ident);
        last_end = off + ident.len();
    }
    if current.len() >= 2 {
        chains.push(current.join("."));
    }
    chains
}

/// All lexical identifiers minus the language's keywords,
/// first-appearance order.
pub fn gather_identifiers(diff: &DiffContext, language: Language) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for line in &diff.diff_lines {
        for (_, ident) in identifiers(&line.text) {
            if !language.is_keyword(ident) && seen.insert(ident.to_string()) {
                out.push(ident.to_string());
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdentifierKind {
    FunctionOrClass,
    Navigation,
    Identifier,
}

/// A mined term with its diff statistics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedIdentifier {
    pub name: String,
    pub kind: IdentifierKind,
    /// Occurrences across the diff lines (at least 1).
    pub frequency: u32,
    /// Minimum |line - completion_line| over occurrences.
    pub proximity: u32,
}

/// Rank names by (frequency desc, proximity asc, name asc).
///
/// Names that never occur in the diff lines are dropped (callers are
/// expected to pass gathered names).
pub fn rank_identifiers(
    names: &[String],
    kind: IdentifierKind,
    diff: &DiffContext,
) -> Vec<RankedIdentifier> {
    let mut ranked: Vec<RankedIdentifier> = names
        .iter()
        .filter_map(|name| {
            let mut frequency = 0u32;
            let mut proximity = u32::MAX;
            for line in &diff.diff_lines {
                let hits = count_occurrences(&line.text, name);
                if hits == 0 {
                    continue;
                }
                frequency += hits;
                if let Some(line_no) = line.modified_line_no {
                    proximity = proximity.min(line_no.abs_diff(diff.completion_line));
                }
            }
            (frequency > 0).then(|| RankedIdentifier {
                name: name.clone(),
                kind,
                frequency,
                proximity: if proximity == u32::MAX { 0 } else { proximity },
            })
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.frequency
            .cmp(&a.frequency)
            .then_with(|| a.proximity.cmp(&b.proximity))
            .then_with(|| a.name.cmp(&b.name))
    });
    ranked
}

/// Whole-token occurrences of `name` in `text`. A plain identifier must
/// not touch identifier bytes; a dotted chain additionally must not
/// touch dots, so sub-chains of a longer chain do not count.
fn count_occurrences(text: &str, name: &str) -> u32 {
    if name.is_empty() || name.len() > text.len() {
        return 0;
    }
    let chain = name.contains('.');
    let blocked = |b: u8| is_ident_byte(b) || (chain && b == b'.');
    let text_b = text.as_bytes();
    let name_b = name.as_bytes();
    let mut count = 0u32;
    let mut i = 0usize;
    while i + name_b.len() <= text_b.len() {
        if &text_b[i..i + name_b.len()] == name_b {
            let before_ok = i == 0 || !blocked(text_b[i - 1]);
            let after = i + name_b.len();
            let after_ok = after == text_b.len() || !blocked(text_b[after]);
            if before_ok && after_ok {
                count += 1;
                i += name_b.len();
                continue;
            }
        }
        i += 1;
    }
    count
}

/// Mined terms per family, each ranked.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MinedTerms {
    pub functions_classes: Vec<RankedIdentifier>,
    pub navigation_chains: Vec<RankedIdentifier>,
    pub navigation_components: Vec<RankedIdentifier>,
    pub identifiers: Vec<RankedIdentifier>,
}

/// Full mining pipeline for one completion point against its original
/// file contents.
pub fn mine(cp: &CompletionPoint, original: &str, language: Language) -> (DiffContext, MinedTerms) {
    let (modified, completion_line) = reconstruct_modified(cp);
    let diff = compute_diff(original, &modified, completion_line);
    let terms = mine_diff(&diff, language);
    (diff, terms)
}

pub fn mine_diff(diff: &DiffContext, language: Language) -> MinedTerms {
    let fc = gather_functions_classes(diff, language);
    let chains = gather_navigation(diff, false, language);
    let components = gather_navigation(diff, true, language);
    let idents = gather_identifiers(diff, language);
    MinedTerms {
        functions_classes: rank_identifiers(&fc, IdentifierKind::FunctionOrClass, diff),
        navigation_chains: rank_identifiers(&chains, IdentifierKind::Navigation, diff),
        navigation_components: rank_identifiers(&components, IdentifierKind::Navigation, diff),
        identifiers: rank_identifiers(&idents, IdentifierKind::Identifier, diff),
    }
}
