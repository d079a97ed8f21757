//! Local shard store: the same shard files the service loads, opened
//! read-only for original-file lookup and bundle assembly.

use std::collections::HashMap;
use std::path::Path;

use scs_core::assemble::ContentSource;
use scs_core::shard::{read_shard, FileRecord, Shard};

pub struct ShardStore {
    shards: Vec<Shard>,
    index: HashMap<(String, String), usize>,
}

impl ShardStore {
    pub fn from_shards(shards: Vec<Shard>) -> ShardStore {
        let index = shards
            .iter()
            .enumerate()
            .map(|(i, s)| ((s.meta.repo_id.clone(), s.meta.revision_id.clone()), i))
            .collect();
        ShardStore { shards, index }
    }

    pub fn load_dir(dir: &Path) -> Result<ShardStore, String> {
        let entries = std::fs::read_dir(dir)
            .map_err(|e| format!("cannot read shard directory {}: {e}", dir.display()))?;
        let mut shards = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| e.to_string())?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("shard") {
                continue;
            }
            let mut file = std::fs::File::open(&path).map_err(|e| e.to_string())?;
            let shard = read_shard(&mut file)
                .map_err(|e| format!("cannot load {}: {e}", path.display()))?;
            shards.push(shard);
        }
        shards.sort_by(|a, b| {
            (&a.meta.repo_id, &a.meta.revision_id).cmp(&(&b.meta.repo_id, &b.meta.revision_id))
        });
        Ok(ShardStore::from_shards(shards))
    }

    pub fn len(&self) -> usize {
        self.shards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shards.is_empty()
    }

    /// The original contents of a file at one revision, empty when the
    /// revision does not contain it (e.g. a brand-new file).
    pub fn original_text(&self, repo_id: &str, revision_id: &str, path: &str) -> String {
        self.file(repo_id, revision_id, path)
            .map(|f| String::from_utf8_lossy(&f.content).into_owned())
            .unwrap_or_default()
    }
}

impl ContentSource for ShardStore {
    fn file(&self, repo_id: &str, revision_id: &str, path: &str) -> Option<&FileRecord> {
        let idx = self.index.get(&(repo_id.to_string(), revision_id.to_string()))?;
        self.shards[*idx].file_by_path(path)
    }
}
