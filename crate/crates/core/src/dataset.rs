//! Benchmark dataset ingestion: one JSON object per line with fields
//! id, repo, revision, path, prefix, suffix. A field map can rename
//! keys for other schemas.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

use crate::miner::CompletionPoint;

/// Maps the canonical record fields to the JSON keys of the file at
/// hand. Defaults to the identity mapping.
#[derive(Debug, Clone)]
pub struct FieldMap {
    pub id: String,
    pub repo: String,
    pub revision: String,
    pub path: String,
    pub prefix: String,
    pub suffix: String,
}

impl Default for FieldMap {
    fn default() -> FieldMap {
        FieldMap {
            id: "id".into(),
            repo: "repo".into(),
            revision: "revision".into(),
            path: "path".into(),
            prefix: "prefix".into(),
            suffix: "suffix".into(),
        }
    }
}

impl FieldMap {
    /// Parse `field=key` pairs separated by commas, e.g.
    /// `id=uid,repo=repository`. Unmentioned fields keep their default
    /// key.
    pub fn parse(spec: &str) -> Result<FieldMap, DatasetError> {
        let mut map = FieldMap::default();
        for pair in spec.split(',').filter(|p| !p.trim().is_empty()) {
            let (field, key) = pair
                .split_once('=')
                .ok_or_else(|| DatasetError::BadFieldMap(pair.to_string()))?;
            let key = key.trim().to_string();
            match field.trim() {
                "id" => map.id = key,
                "repo" => map.repo = key,
                "revision" => map.revision = key,
                "path" => map.path = key,
                "prefix" => map.prefix = key,
                "suffix" => map.suffix = key,
                other => return Err(DatasetError::BadFieldMap(other.to_string())),
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid JSON: {message}")]
    BadJson { line: usize, message: String },
    #[error("line {line}: missing or non-string field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("bad field map entry `{0}` (expected field=key)")]
    BadFieldMap(String),
}

/// Read a JSONL dataset into completion points. Blank lines are
/// skipped; ids must be unique.
pub fn read_dataset(path: &Path, map: &FieldMap) -> Result<Vec<CompletionPoint>, DatasetError> {
    let file = std::fs::File::open(path)?;
    read_dataset_from(std::io::BufReader::new(file), map)
}

pub fn read_dataset_from(
    reader: impl BufRead,
    map: &FieldMap,
) -> Result<Vec<CompletionPoint>, DatasetError> {
    let mut out = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| DatasetError::BadJson { line: line_no, message: e.to_string() })?;
        let get = |key: &str| -> Result<String, DatasetError> {
            match value.get(key) {
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(serde_json::Value::Number(n)) => Ok(n.to_string()),
                _ => Err(DatasetError::MissingField { line: line_no, field: key.to_string() }),
            }
        };
        let id = get(&map.id)?;
        if seen.insert(id.clone(), line_no).is_some() {
            return Err(DatasetError::DuplicateId { line: line_no, id });
        }
        out.push(CompletionPoint {
            id,
            repo_id: get(&map.repo)?,
            revision_id: get(&map.revision)?,
            path: get(&map.path)?,
            prefix: get(&map.prefix)?,
            suffix: get(&map.suffix)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_records_and_rejects_duplicates() {
        let data = concat!(
            r#"{"id":"a","repo":"r","revision":"v1","path":"p.py","prefix":"x","suffix":"y"}"#,
            "\n\n",
            r#"{"id":"b","repo":"r","revision":"v2","path":"q.py","prefix":"","suffix":""}"#,
            "\n",
        );
        let points = read_dataset_from(data.as_bytes(), &FieldMap::default()).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].id, "a");
        assert_eq!(points[1].revision_id, "v2");

        let dup = concat!(
            r#"{"id":"a","repo":"r","revision":"v1","path":"p","prefix":"","suffix":""}"#,
            "\n",
            r#"{"id":"a","repo":"r","revision":"v2","path":"p","prefix":"","suffix":""}"#,
            "\n",
        );
        let err = read_dataset_from(dup.as_bytes(), &FieldMap::default()).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateId { .. }));
    }

    #[test]
    fn field_map_renames_keys() {
        let map = FieldMap::parse("id=uid,repo=repository").unwrap();
        let data =
            r#"{"uid":"a","repository":"r","revision":"v","path":"p","prefix":"","suffix":""}"#;
        let points = read_dataset_from(data.as_bytes(), &map).unwrap();
        assert_eq!(points[0].id, "a");
        assert_eq!(points[0].repo_id, "r");
        assert!(FieldMap::parse("bogus=x").is_err());
        assert!(FieldMap::parse("id").is_err());
    }

    #[test]
    fn numeric_ids_are_stringified() {
        let data = r#"{"id":7,"repo":"r","revision":"v","path":"p","prefix":"","suffix":""}"#;
        let points = read_dataset_from(data.as_bytes(), &FieldMap::default()).unwrap();
        assert_eq!(points[0].id, "7");
    }

    #[test]
    fn bad_json_reports_line() {
        let data = "{\"id\":\"a\"\n";
        let err = read_dataset_from(data.as_bytes(), &FieldMap::default()).unwrap_err();
        assert!(matches!(err, DatasetError::BadJson { line: 1, .. }));
    }
}
