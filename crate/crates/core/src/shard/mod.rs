//! Immutable per-revision index shards: file contents, trigram postings
//! and a symbol table for one (repository, revision) snapshot.
//!
//! A shard is built once and never mutated; any number of readers may
//! search it concurrently.

mod io;
mod search;
mod symbols;

pub use io::{read_shard, read_shard_bytes, write_shard, ShardReadError, SHARD_MAGIC};
pub use search::{search_shard, search_shard_with_stats, ShardSearchStats};
pub use symbols::{declaration_on_line, extract_symbols, UnsupportedLanguage};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lang::Language;

/// Current on-disk format version written by this crate.
pub const FORMAT_VERSION: u32 = 1;

/// A trigram is 3 consecutive content bytes.
pub type Trigram = [u8; 3];

/// One occurrence of a trigram: `(file index, byte offset)`.
pub type Posting = (u32, u32);

/// Identifies one (repository, revision) snapshot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardMeta {
    pub repo_id: String,
    pub revision_id: String,
    pub file_count: u32,
    /// Unix seconds, UTC. `build_shard` leaves this at 0 so identical
    /// inputs serialize identically; callers may stamp a real time.
    pub built_at: u64,
    pub format_version: u32,
}

/// One indexed file: raw bytes plus the byte offsets of line starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRecord {
    /// Repo-relative path, unique within a shard.
    pub path: String,
    pub content: Vec<u8>,
    /// `line_offsets[0] == 0`; strictly increasing; last `<=` content length.
    pub line_offsets: Vec<u32>,
    pub language: Language,
}

impl FileRecord {
    pub fn new(path: String, content: Vec<u8>, language: Language) -> FileRecord {
        let line_offsets = line_offsets(&content);
        FileRecord { path, content, line_offsets, language }
    }

    pub fn line_count(&self) -> usize {
        self.line_offsets.len()
    }

    /// Bytes of the 1-based line `line`, without the trailing newline.
    pub fn line(&self, line: usize) -> Option<&[u8]> {
        let start = *self.line_offsets.get(line.checked_sub(1)?)? as usize;
        let end = self
            .line_offsets
            .get(line)
            .map(|&o| o as usize)
            .unwrap_or(self.content.len());
        let mut slice = &self.content[start..end];
        if slice.last() == Some(&b'\n') {
            slice = &slice[..slice.len() - 1];
        }
        if slice.last() == Some(&b'\r') {
            slice = &slice[..slice.len() - 1];
        }
        Some(slice)
    }

    /// 1-based line number containing the byte at `offset`.
    pub fn line_of_offset(&self, offset: u32) -> usize {
        match self.line_offsets.binary_search(&offset) {
            Ok(i) => i + 1,
            Err(i) => i, // i >= 1 because line_offsets[0] == 0
        }
    }
}

/// Byte offsets of line starts: 0, then one past every newline that has
/// content after it.
pub fn line_offsets(content: &[u8]) -> Vec<u32> {
    let mut offsets = vec![0u32];
    for (i, &b) in content.iter().enumerate() {
        if b == b'\n' && i + 1 < content.len() {
            offsets.push((i + 1) as u32);
        }
    }
    offsets
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SymbolKind {
    Function,
    Class,
    Other,
}

/// A declared symbol: name, kind and the 1-based declaration line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolEntry {
    pub name: String,
    pub kind: SymbolKind,
    pub path: String,
    pub line: u32,
}

/// Immutable compressed index of one (repository, revision) snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shard {
    pub meta: ShardMeta,
    pub files: Vec<FileRecord>,
    /// Trigram -> occurrences sorted by (file index, byte offset).
    pub trigram_postings: BTreeMap<Trigram, Vec<Posting>>,
    pub symbols: Vec<SymbolEntry>,
}

impl Shard {
    pub fn file_by_path(&self, path: &str) -> Option<&FileRecord> {
        self.files.iter().find(|f| f.path == path)
    }

    /// Symbols declared in the given file.
    pub fn symbols_in<'a>(&'a self, path: &'a str) -> impl Iterator<Item = &'a SymbolEntry> {
        self.symbols.iter().filter(move |s| s.path == path)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BuildError {
    #[error("duplicate path in shard input: {0}")]
    DuplicatePath(String),
    #[error("repo_id and revision_id must be non-empty")]
    EmptyIdentity,
}

/// All distinct 3-byte windows of `text`; empty when `len < 3`.
pub fn extract_trigrams(text: &[u8]) -> std::collections::BTreeSet<Trigram> {
    let mut set = std::collections::BTreeSet::new();
    if text.len() >= 3 {
        for w in text.windows(3) {
            set.insert([w[0], w[1], w[2]]);
        }
    }
    set
}

/// Build a shard from in-memory file contents.
///
/// Files containing a NUL byte are treated as binary and skipped with a
/// warning. Kotlin and Python files contribute symbols; `Other` files are
/// indexed for content only. The result is a pure function of the inputs:
/// building twice yields byte-identical serialized shards.
pub fn build_shard(
    repo_id: &str,
    revision_id: &str,
    files: Vec<(String, Vec<u8>, Language)>,
) -> Result<Shard, BuildError> {
    if repo_id.is_empty() || revision_id.is_empty() {
        return Err(BuildError::EmptyIdentity);
    }
    let mut seen = std::collections::HashSet::new();
    for (path, _, _) in &files {
        if !seen.insert(path.clone()) {
            return Err(BuildError::DuplicatePath(path.clone()));
        }
    }

    let mut records = Vec::new();
    for (path, content, language) in files {
        if content.contains(&0u8) {
            log::warn!("skipping binary file {path} ({repo_id}@{revision_id})");
            continue;
        }
        records.push(FileRecord::new(path, content, language));
    }

    let mut postings: std::collections::HashMap<Trigram, Vec<Posting>> =
        std::collections::HashMap::new();
    for (file_index, rec) in records.iter().enumerate() {
        if rec.content.len() < 3 {
            continue;
        }
        for (offset, w) in rec.content.windows(3).enumerate() {
            postings
                .entry([w[0], w[1], w[2]])
                .or_default()
                .push((file_index as u32, offset as u32));
        }
    }
    // windows() emission order is already (file, offset)-sorted per file,
    // and files are visited in index order, so lists are sorted.
    let trigram_postings: BTreeMap<Trigram, Vec<Posting>> = postings.into_iter().collect();

    let mut symbols = Vec::new();
    for rec in &records {
        if rec.language == Language::Other {
            continue;
        }
        let text = String::from_utf8_lossy(&rec.content);
        let found = extract_symbols(&rec.path, &text, rec.language)
            .expect("language checked above");
        symbols.extend(found);
    }

    let meta = ShardMeta {
        repo_id: repo_id.to_string(),
        revision_id: revision_id.to_string(),
        file_count: records.len() as u32,
        built_at: 0,
        format_version: FORMAT_VERSION,
    };
    Ok(Shard { meta, files: records, trigram_postings, symbols })
}
