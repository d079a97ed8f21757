//! Query evaluation over one shard.
//!
//! Candidate files are narrowed by the compiled trigram requirement and
//! then verified line by line, so results equal a full scan. Matching
//! semantics, shared with the documented wire contract:
//!
//! - a `Term` matches a file when some line contains its text
//!   (ASCII-case-insensitively for bare terms); its lines are all lines
//!   containing the text
//! - a `Regex` matches per line
//! - `repo:` / `rev:` compare the shard identity exactly; `file:` is a
//!   path substring; all three contribute no lines
//! - `sym:` matches files declaring a symbol whose name matches the
//!   wrapped atom; its lines are the declaration lines
//! - `And` requires every child and reports the union of their lines;
//!   `Or` requires any child and reports the union of matching children
//!
//! Each result line is scored by the number of distinct query atoms on
//! it, a symbol-declaration bonus and line brevity.

use std::collections::{BTreeSet, HashMap};

use crate::query::{
    result_order, score_match, CompiledQuery, FilterKind, QueryNode, SearchResult, TrigramExpr,
};

use super::{FileRecord, Shard, SymbolEntry, Trigram};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ShardSearchStats {
    /// Files that survived the trigram pre-filter and were verified.
    pub files_considered: usize,
    /// Files with at least one matching line.
    pub files_matched: usize,
}

/// All line-level matches of `query` in `shard`, best first, at most
/// `limit`.
pub fn search_shard(shard: &Shard, query: &CompiledQuery, limit: usize) -> Vec<SearchResult> {
    search_shard_with_stats(shard, query, limit).0
}

pub fn search_shard_with_stats(
    shard: &Shard,
    query: &CompiledQuery,
    limit: usize,
) -> (Vec<SearchResult>, ShardSearchStats) {
    let mut stats = ShardSearchStats::default();
    let regexes = compile_regexes(&query.tree);
    let atoms = query.tree.atoms();
    let symbols_by_path = group_symbols(shard);
    let needs_fold = atoms
        .iter()
        .any(|a| matches!(a, QueryNode::Term { case_sensitive: false, .. }));

    let candidates = candidate_files(shard, &query.required_trigrams);
    stats.files_considered = candidates.len();

    // score matches as (score, file, line) and materialize strings only
    // for the top `limit`
    let mut matches: Vec<(f64, usize, u32)> = Vec::new();
    for file_index in candidates {
        let file = &shard.files[file_index];
        let no_symbols: Vec<&SymbolEntry> = Vec::new();
        let symbols = symbols_by_path.get(file.path.as_str()).unwrap_or(&no_symbols);
        let folded = needs_fold.then(|| file.content.to_ascii_lowercase());
        let scan = FileScan { file, folded: folded.as_deref() };
        let eval = eval_node(&query.tree, shard, &scan, symbols, &regexes);
        if !eval.matched || eval.lines.is_empty() {
            continue;
        }
        stats.files_matched += 1;
        for &line_no in &eval.lines {
            let line = file.line(line_no as usize).unwrap_or(b"");
            let distinct = atoms
                .iter()
                .filter(|a| atom_matches_line(a, line, &regexes))
                .count();
            let symbol_hit = symbols.iter().any(|s| {
                s.line == line_no && atoms.iter().any(|a| atom_matches_name(a, &s.name, &regexes))
            });
            matches.push((score_match(distinct, symbol_hit, line.len()), file_index, line_no));
        }
    }
    matches.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| shard.files[a.1].path.cmp(&shard.files[b.1].path))
            .then_with(|| a.2.cmp(&b.2))
    });
    matches.truncate(limit);

    let results = matches
        .into_iter()
        .map(|(score, file_index, line_no)| {
            let file = &shard.files[file_index];
            let line = file.line(line_no as usize).unwrap_or(b"");
            SearchResult {
                repo_id: shard.meta.repo_id.clone(),
                revision_id: shard.meta.revision_id.clone(),
                path: file.path.clone(),
                line_start: line_no,
                line_end: line_no,
                score,
                fragment: String::from_utf8_lossy(line).into_owned(),
            }
        })
        .collect();
    (results, stats)
}

fn group_symbols(shard: &Shard) -> HashMap<&str, Vec<&SymbolEntry>> {
    let mut map: HashMap<&str, Vec<&SymbolEntry>> = HashMap::new();
    for sym in &shard.symbols {
        map.entry(sym.path.as_str()).or_default().push(sym);
    }
    map
}

/// Indices of files satisfying the trigram requirement.
fn candidate_files(shard: &Shard, required: &TrigramExpr) -> Vec<usize> {
    if *required == TrigramExpr::True {
        return (0..shard.files.len()).collect();
    }
    let file_count = shard.files.len();
    let mut sets: HashMap<Trigram, Vec<bool>> = HashMap::new();
    for t in required.trigrams() {
        let mut present = vec![false; file_count];
        if let Some(posts) = shard.trigram_postings.get(&t) {
            for &(f, _) in posts {
                present[f as usize] = true;
            }
        }
        sets.insert(t, present);
    }
    (0..file_count)
        .filter(|&i| required.eval(&mut |t| sets[&t][i]))
        .collect()
}

fn compile_regexes(tree: &QueryNode) -> HashMap<String, regex::bytes::Regex> {
    let mut out = HashMap::new();
    for atom in tree.atoms() {
        if let QueryNode::Regex { pattern } = atom {
            if !out.contains_key(pattern) {
                match regex::bytes::Regex::new(pattern) {
                    Ok(re) => {
                        out.insert(pattern.clone(), re);
                    }
                    Err(e) => log::warn!("regex {pattern:?} failed to compile: {e}"),
                }
            }
        }
    }
    out
}

struct Eval {
    matched: bool,
    lines: BTreeSet<u32>,
}

/// One file under verification, with its case-folded content when the
/// query has case-insensitive terms.
struct FileScan<'a> {
    file: &'a FileRecord,
    folded: Option<&'a [u8]>,
}

fn eval_node(
    node: &QueryNode,
    shard: &Shard,
    scan: &FileScan<'_>,
    symbols: &[&SymbolEntry],
    regexes: &HashMap<String, regex::bytes::Regex>,
) -> Eval {
    let file = scan.file;
    match node {
        QueryNode::Term { text, case_sensitive } => {
            let lines = if *case_sensitive {
                term_lines(file, &file.content, text.as_bytes())
            } else {
                let hay = scan.folded.unwrap_or(&file.content);
                term_lines(file, hay, &text.to_ascii_lowercase().into_bytes())
            };
            Eval { matched: !lines.is_empty(), lines }
        }
        QueryNode::Regex { .. } => {
            let mut lines = BTreeSet::new();
            for line_no in 1..=file.line_count() {
                let line = file.line(line_no).unwrap_or(b"");
                if atom_matches_line(node, line, regexes) {
                    lines.insert(line_no as u32);
                }
            }
            Eval { matched: !lines.is_empty(), lines }
        }
        QueryNode::Filter { kind: FilterKind::Repo, argument, .. } => Eval {
            matched: shard.meta.repo_id == *argument,
            lines: BTreeSet::new(),
        },
        QueryNode::Filter { kind: FilterKind::Revision, argument, .. } => Eval {
            matched: shard.meta.revision_id == *argument,
            lines: BTreeSet::new(),
        },
        QueryNode::Filter { kind: FilterKind::File, argument, .. } => Eval {
            matched: file.path.contains(argument.as_str()),
            lines: BTreeSet::new(),
        },
        QueryNode::Filter { kind: FilterKind::Symbol, child, .. } => {
            let mut lines = BTreeSet::new();
            if let Some(atom) = child {
                for sym in symbols {
                    if atom_matches_name(atom, &sym.name, regexes) {
                        lines.insert(sym.line);
                    }
                }
            }
            Eval { matched: !lines.is_empty(), lines }
        }
        QueryNode::And(children) => {
            let mut lines = BTreeSet::new();
            for child in children {
                let e = eval_node(child, shard, scan, symbols, regexes);
                if !e.matched {
                    return Eval { matched: false, lines: BTreeSet::new() };
                }
                lines.extend(e.lines);
            }
            Eval { matched: true, lines }
        }
        QueryNode::Or(children) => {
            let mut matched = false;
            let mut lines = BTreeSet::new();
            for child in children {
                let e = eval_node(child, shard, scan, symbols, regexes);
                if e.matched {
                    matched = true;
                    lines.extend(e.lines);
                }
            }
            Eval { matched, lines }
        }
    }
}

/// Lines containing `needle`, found by scanning the whole content and
/// mapping occurrence offsets to lines. A needle with a newline can
/// never sit inside one line; a needle with a carriage return falls
/// back to the per-line path because `line()` strips trailing `\r`.
fn term_lines(file: &FileRecord, haystack: &[u8], needle: &[u8]) -> BTreeSet<u32> {
    if needle.is_empty() {
        return (1..=file.line_count() as u32).collect();
    }
    if needle.contains(&b'\n') {
        return BTreeSet::new();
    }
    if needle.contains(&b'\r') {
        let mut lines = BTreeSet::new();
        for line_no in 1..=file.line_count() {
            let start = file.line_offsets[line_no - 1] as usize;
            let end = file
                .line_offsets
                .get(line_no)
                .map(|&o| o as usize)
                .unwrap_or(haystack.len());
            let mut slice = &haystack[start..end];
            if slice.last() == Some(&b'\n') {
                slice = &slice[..slice.len() - 1];
            }
            if slice.last() == Some(&b'\r') {
                slice = &slice[..slice.len() - 1];
            }
            if contains_subslice(slice, needle) {
                lines.insert(line_no as u32);
            }
        }
        return lines;
    }
    memchr::memmem::find_iter(haystack, needle)
        .map(|off| file.line_of_offset(off as u32) as u32)
        .collect()
}

/// Does a content atom match this line's text?
fn atom_matches_line(
    atom: &QueryNode,
    line: &[u8],
    regexes: &HashMap<String, regex::bytes::Regex>,
) -> bool {
    match atom {
        QueryNode::Term { text, case_sensitive: true } => {
            contains_subslice(line, text.as_bytes())
        }
        QueryNode::Term { text, case_sensitive: false } => {
            contains_subslice_fold(line, text.as_bytes())
        }
        QueryNode::Regex { pattern } => {
            regexes.get(pattern).map(|re| re.is_match(line)).unwrap_or(false)
        }
        _ => false,
    }
}

/// Does a content atom match a symbol name?
fn atom_matches_name(
    atom: &QueryNode,
    name: &str,
    regexes: &HashMap<String, regex::bytes::Regex>,
) -> bool {
    atom_matches_line(atom, name.as_bytes(), regexes)
}

fn contains_subslice(haystack: &[u8], needle: &[u8]) -> bool {
    if needle.is_empty() {
        return true;
    }
    if needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// ASCII-case-insensitive containment.
fn contains_subslice_fold(haystack: &[u8], needle: &[u8]) -> bool {
    if needle.is_empty() {
        return true;
    }
    if needle.len() > haystack.len() {
        return false;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().zip(needle).all(|(a, b)| a.eq_ignore_ascii_case(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::Language;
    use crate::query::{parse_query, plan_trigrams};
    use crate::shard::build_shard;

    fn shard_of(files: &[(&str, &str, Language)]) -> Shard {
        build_shard(
            "projA",
            "r17",
            files
                .iter()
                .map(|(p, c, l)| (p.to_string(), c.as_bytes().to_vec(), *l))
                .collect(),
        )
        .unwrap()
    }

    fn run(shard: &Shard, query: &str) -> Vec<SearchResult> {
        let compiled = plan_trigrams(&parse_query(query).unwrap());
        search_shard(shard, &compiled, usize::MAX)
    }

    #[test]
    fn finds_identifier_at_its_line() {
        let shard = shard_of(&[
            ("a.py", "x = 1\nresult = parseConfig(path)\n", Language::Python),
            ("b.py", "y = 2\n", Language::Python),
        ]);
        let results = run(&shard, "parseConfig");
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].path, "a.py");
        assert_eq!(results[0].line_start, 2);
        assert_eq!(results[0].fragment, "result = parseConfig(path)");
    }

    #[test]
    fn absent_term_yields_empty() {
        let shard = shard_of(&[("a.py", "x = 1\n", Language::Python)]);
        assert!(run(&shard, "zzz_absent_zzz").is_empty());
    }

    #[test]
    fn or_with_one_absent_side_equals_present_side() {
        let shard = shard_of(&[
            ("a.py", "bar = 1\n", Language::Python),
            ("b.py", "none here\n", Language::Python),
        ]);
        let or_results = run(&shard, "foo or bar");
        let bar_results = run(&shard, "bar");
        let key = |r: &SearchResult| (r.path.clone(), r.line_start);
        assert_eq!(
            or_results.iter().map(key).collect::<Vec<_>>(),
            bar_results.iter().map(key).collect::<Vec<_>>()
        );
    }

    #[test]
    fn bare_terms_fold_case_quoted_do_not() {
        let shard = shard_of(&[("a.py", "PARSECONFIG = 1\n", Language::Python)]);
        assert_eq!(run(&shard, "parseconfig").len(), 1);
        assert_eq!(run(&shard, "parseConfig").len(), 1);
        assert!(run(&shard, "\"parseConfig\"").is_empty());
        assert_eq!(run(&shard, "\"PARSECONFIG\"").len(), 1);
    }

    #[test]
    fn and_requires_both_lines_union_reported() {
        let shard = shard_of(&[
            ("a.py", "alpha = 1\nbeta = 2\n", Language::Python),
            ("b.py", "alpha only\n", Language::Python),
        ]);
        let results = run(&shard, "alpha beta");
        let mut lines: Vec<(String, u32)> =
            results.iter().map(|r| (r.path.clone(), r.line_start)).collect();
        lines.sort();
        assert_eq!(lines, vec![("a.py".to_string(), 1), ("a.py".to_string(), 2)]);
    }

    #[test]
    fn repo_and_rev_filters_gate_the_shard() {
        let shard = shard_of(&[("a.py", "needle = 1\n", Language::Python)]);
        assert_eq!(run(&shard, "repo:projA rev:r17 needle").len(), 1);
        assert!(run(&shard, "repo:other needle").is_empty());
        assert!(run(&shard, "repo:projA rev:r99 needle").is_empty());
    }

    #[test]
    fn file_filter_restricts_paths() {
        let shard = shard_of(&[
            ("src/a.py", "needle\n", Language::Python),
            ("tests/b.py", "needle\n", Language::Python),
        ]);
        let results = run(&shard, "file:src needle");
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].path, "src/a.py");
    }

    #[test]
    fn sym_filter_reports_declaration_lines() {
        let shard = shard_of(&[(
            "a.py",
            "def handle(x):\n    return handle\nhandle = 3\n",
            Language::Python,
        )]);
        let results = run(&shard, "sym:handle");
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].line_start, 1);
        // declaration line scores the symbol bonus
        assert!(results[0].score > 3.0);
    }

    #[test]
    fn regex_matches_lines() {
        let shard = shard_of(&[("a.py", "parseConfig\nparseValue\n", Language::Python)]);
        let results = run(&shard, "/pars.Config/");
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].line_start, 1);
    }

    #[test]
    fn results_are_score_ordered_with_path_tiebreak() {
        let shard = shard_of(&[
            ("b.py", "one two\n", Language::Python),
            ("a.py", "one two\n", Language::Python),
        ]);
        let results = run(&shard, "one two");
        assert_eq!(results[0].path, "a.py");
        assert_eq!(results[1].path, "b.py");
        assert_eq!(results[0].score, results[1].score);
    }

    #[test]
    fn limit_truncates_after_ordering() {
        let shard = shard_of(&[("a.py", "hit\nhit hit\nhit\n", Language::Python)]);
        let all = run(&shard, "hit");
        assert_eq!(all.len(), 3);
        let compiled = plan_trigrams(&parse_query("hit").unwrap());
        let top = search_shard(&shard, &compiled, 1);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].line_start, all[0].line_start);
    }

    #[test]
    fn stats_count_considered_and_matched() {
        let shard = shard_of(&[
            ("a.py", "needle\n", Language::Python),
            ("b.py", "needle and more\n", Language::Python),
            ("c.py", "nothing\n", Language::Python),
        ]);
        let compiled = plan_trigrams(&parse_query("needle").unwrap());
        let (results, stats) = search_shard_with_stats(&shard, &compiled, 100);
        assert_eq!(results.len(), 2);
        assert_eq!(stats.files_matched, 2);
        assert!(stats.files_considered >= 2);
        assert!(stats.files_considered <= 3);
    }
}
