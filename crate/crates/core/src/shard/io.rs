//! Shard persistence.
//!
//! Layout: the 4 magic bytes `SCS\x01`, then five sections in fixed
//! order — meta, file table, content blob, postings, symbols. Each
//! section is `u32 payload length | u32 FNV-1a checksum | payload`, all
//! integers little-endian. Posting lists are delta + varint encoded.
//! Line offsets are derived data and are recomputed on read.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use thiserror::Error;

use crate::lang::Language;

use super::{FileRecord, Posting, Shard, ShardMeta, SymbolEntry, SymbolKind, Trigram, FORMAT_VERSION};

pub const SHARD_MAGIC: [u8; 4] = *b"SCS\x01";

#[derive(Debug, Error)]
pub enum ShardReadError {
    #[error("corrupt shard: {0}")]
    Corrupt(String),
    #[error("unsupported shard format version {found} (expected {FORMAT_VERSION})")]
    VersionMismatch { found: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fnv1a(bytes: &[u8]) -> u32 {
    let mut hash: u32 = 0x811c_9dc5;
    for &b in bytes {
        hash ^= b as u32;
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

// ---- writing ----

/// Serialize a shard. Identical shards serialize identically.
pub fn write_shard(shard: &Shard, sink: &mut dyn Write) -> std::io::Result<()> {
    sink.write_all(&SHARD_MAGIC)?;
    write_section(sink, &encode_meta(&shard.meta))?;
    write_section(sink, &encode_file_table(&shard.files))?;
    write_section(sink, &encode_content(&shard.files))?;
    write_section(sink, &encode_postings(&shard.trigram_postings))?;
    write_section(sink, &encode_symbols(&shard.symbols))?;
    Ok(())
}

fn write_section(sink: &mut dyn Write, payload: &[u8]) -> std::io::Result<()> {
    sink.write_all(&(payload.len() as u32).to_le_bytes())?;
    sink.write_all(&fnv1a(payload).to_le_bytes())?;
    sink.write_all(payload)?;
    Ok(())
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_str(buf: &mut Vec<u8>, s: &str) {
    put_u32(buf, s.len() as u32);
    buf.extend_from_slice(s.as_bytes());
}

fn put_varint(buf: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        buf.push((v as u8 & 0x7f) | 0x80);
        v >>= 7;
    }
    buf.push(v as u8);
}

fn encode_meta(meta: &ShardMeta) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, meta.format_version);
    put_str(&mut buf, &meta.repo_id);
    put_str(&mut buf, &meta.revision_id);
    put_u32(&mut buf, meta.file_count);
    put_u64(&mut buf, meta.built_at);
    buf
}

fn lang_code(lang: Language) -> u8 {
    match lang {
        Language::Other => 0,
        Language::Kotlin => 1,
        Language::Python => 2,
    }
}

fn encode_file_table(files: &[FileRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, files.len() as u32);
    for f in files {
        put_str(&mut buf, &f.path);
        buf.push(lang_code(f.language));
        put_u32(&mut buf, f.content.len() as u32);
    }
    buf
}

fn encode_content(files: &[FileRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    for f in files {
        buf.extend_from_slice(&f.content);
    }
    buf
}

fn encode_postings(postings: &BTreeMap<Trigram, Vec<Posting>>) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, postings.len() as u32);
    for (tri, posts) in postings {
        buf.extend_from_slice(tri);
        put_varint(&mut buf, posts.len() as u32);
        let mut prev_file = 0u32;
        let mut prev_offset = 0u32;
        for &(file, offset) in posts {
            let dfile = file - prev_file;
            put_varint(&mut buf, dfile);
            if dfile > 0 {
                prev_offset = 0;
            }
            put_varint(&mut buf, offset - prev_offset);
            prev_file = file;
            prev_offset = offset;
        }
    }
    buf
}

fn encode_symbols(symbols: &[SymbolEntry]) -> Vec<u8> {
    let mut buf = Vec::new();
    put_u32(&mut buf, symbols.len() as u32);
    for s in symbols {
        put_str(&mut buf, &s.name);
        buf.push(match s.kind {
            SymbolKind::Function => 0,
            SymbolKind::Class => 1,
            SymbolKind::Other => 2,
        });
        put_str(&mut buf, &s.path);
        put_u32(&mut buf, s.line);
    }
    buf
}

// ---- reading ----

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn corrupt(msg: &str) -> ShardReadError {
        ShardReadError::Corrupt(msg.to_string())
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], ShardReadError> {
        if self.pos + n > self.buf.len() {
            return Err(Self::corrupt(&format!("truncated {what}")));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32, ShardReadError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64, ShardReadError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn byte(&mut self, what: &str) -> Result<u8, ShardReadError> {
        Ok(self.take(1, what)?[0])
    }

    fn string(&mut self, what: &str) -> Result<String, ShardReadError> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Self::corrupt(&format!("{what} is not UTF-8")))
    }

    fn varint(&mut self, what: &str) -> Result<u32, ShardReadError> {
        let mut out: u32 = 0;
        let mut shift = 0u32;
        loop {
            let b = self.byte(what)?;
            out |= ((b & 0x7f) as u32)
                .checked_shl(shift)
                .ok_or_else(|| Self::corrupt(&format!("varint overflow in {what}")))?;
            if b & 0x80 == 0 {
                return Ok(out);
            }
            shift += 7;
            if shift >= 32 {
                return Err(Self::corrupt(&format!("varint too long in {what}")));
            }
        }
    }

    fn finished(&self) -> bool {
        self.pos == self.buf.len()
    }
}

/// Deserialize a shard, validating structure and per-section checksums.
pub fn read_shard(source: &mut dyn Read) -> Result<Shard, ShardReadError> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    read_shard_bytes(&buf)
}

pub fn read_shard_bytes(buf: &[u8]) -> Result<Shard, ShardReadError> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic = cur.take(4, "magic")?;
    if magic != SHARD_MAGIC {
        return Err(Cursor::corrupt("bad magic"));
    }

    let meta_payload = section(&mut cur, "meta")?;
    let meta = decode_meta(meta_payload)?;
    if meta.format_version != FORMAT_VERSION {
        return Err(ShardReadError::VersionMismatch { found: meta.format_version });
    }

    let table_payload = section(&mut cur, "file table")?;
    let table = decode_file_table(table_payload)?;
    if table.len() != meta.file_count as usize {
        return Err(Cursor::corrupt("file table does not match meta file_count"));
    }

    let content_payload = section(&mut cur, "content blob")?;
    let expected: usize = table.iter().map(|(_, _, len)| *len as usize).sum();
    if content_payload.len() != expected {
        return Err(Cursor::corrupt("content blob length mismatch"));
    }
    let mut files = Vec::with_capacity(table.len());
    let mut offset = 0usize;
    for (path, language, len) in table {
        let content = content_payload[offset..offset + len as usize].to_vec();
        offset += len as usize;
        files.push(FileRecord::new(path, content, language));
    }

    let postings_payload = section(&mut cur, "postings")?;
    let trigram_postings = decode_postings(postings_payload, &files)?;

    let symbols_payload = section(&mut cur, "symbols")?;
    let symbols = decode_symbols(symbols_payload)?;

    if !cur.finished() {
        return Err(Cursor::corrupt("trailing bytes after last section"));
    }
    Ok(Shard { meta, files, trigram_postings, symbols })
}

fn section<'a>(cur: &mut Cursor<'a>, name: &str) -> Result<&'a [u8], ShardReadError> {
    let len = cur.u32(&format!("{name} section header"))? as usize;
    let checksum = cur.u32(&format!("{name} section header"))?;
    let payload = cur.take(len, &format!("{name} section"))?;
    if fnv1a(payload) != checksum {
        return Err(Cursor::corrupt(&format!("{name} section checksum mismatch")));
    }
    Ok(payload)
}

fn decode_meta(payload: &[u8]) -> Result<ShardMeta, ShardReadError> {
    let mut cur = Cursor { buf: payload, pos: 0 };
    let format_version = cur.u32("format_version")?;
    let repo_id = cur.string("repo_id")?;
    let revision_id = cur.string("revision_id")?;
    let file_count = cur.u32("file_count")?;
    let built_at = cur.u64("built_at")?;
    if !cur.finished() {
        return Err(Cursor::corrupt("trailing bytes in meta"));
    }
    if repo_id.is_empty() || revision_id.is_empty() {
        return Err(Cursor::corrupt("blank shard identity"));
    }
    Ok(ShardMeta { repo_id, revision_id, file_count, built_at, format_version })
}

fn decode_file_table(payload: &[u8]) -> Result<Vec<(String, Language, u32)>, ShardReadError> {
    let mut cur = Cursor { buf: payload, pos: 0 };
    let count = cur.u32("file count")? as usize;
    if count > payload.len() {
        return Err(Cursor::corrupt("file count exceeds section size"));
    }
    let mut out = Vec::with_capacity(count);
    let mut seen = std::collections::HashSet::new();
    for _ in 0..count {
        let path = cur.string("file path")?;
        let language = match cur.byte("language")? {
            0 => Language::Other,
            1 => Language::Kotlin,
            2 => Language::Python,
            other => return Err(Cursor::corrupt(&format!("unknown language code {other}"))),
        };
        let len = cur.u32("content length")?;
        if !seen.insert(path.clone()) {
            return Err(Cursor::corrupt(&format!("duplicate path {path}")));
        }
        out.push((path, language, len));
    }
    if !cur.finished() {
        return Err(Cursor::corrupt("trailing bytes in file table"));
    }
    Ok(out)
}

fn decode_postings(
    payload: &[u8],
    files: &[FileRecord],
) -> Result<BTreeMap<Trigram, Vec<Posting>>, ShardReadError> {
    let mut cur = Cursor { buf: payload, pos: 0 };
    let count = cur.u32("trigram count")? as usize;
    if count > payload.len() {
        return Err(Cursor::corrupt("trigram count exceeds section size"));
    }
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let tri_bytes = cur.take(3, "trigram")?;
        let tri: Trigram = [tri_bytes[0], tri_bytes[1], tri_bytes[2]];
        let n = cur.varint("posting count")? as usize;
        if n > payload.len() {
            return Err(Cursor::corrupt("posting count exceeds section size"));
        }
        let mut posts = Vec::with_capacity(n);
        let mut prev_file = 0u32;
        let mut prev_offset = 0u32;
        for _ in 0..n {
            let dfile = cur.varint("posting file delta")?;
            let file = prev_file
                .checked_add(dfile)
                .ok_or_else(|| Cursor::corrupt("posting file overflow"))?;
            if dfile > 0 {
                prev_offset = 0;
            }
            let doffset = cur.varint("posting offset delta")?;
            let offset = prev_offset
                .checked_add(doffset)
                .ok_or_else(|| Cursor::corrupt("posting offset overflow"))?;
            let rec = files
                .get(file as usize)
                .ok_or_else(|| Cursor::corrupt("posting file index out of range"))?;
            if offset as usize + 3 > rec.content.len() {
                return Err(Cursor::corrupt("posting offset out of range"));
            }
            posts.push((file, offset));
            prev_file = file;
            prev_offset = offset;
        }
        if out.insert(tri, posts).is_some() {
            return Err(Cursor::corrupt("duplicate trigram entry"));
        }
    }
    if !cur.finished() {
        return Err(Cursor::corrupt("trailing bytes in postings"));
    }
    Ok(out)
}

fn decode_symbols(payload: &[u8]) -> Result<Vec<SymbolEntry>, ShardReadError> {
    let mut cur = Cursor { buf: payload, pos: 0 };
    let count = cur.u32("symbol count")? as usize;
    if count > payload.len() {
        return Err(Cursor::corrupt("symbol count exceeds section size"));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let name = cur.string("symbol name")?;
        let kind = match cur.byte("symbol kind")? {
            0 => SymbolKind::Function,
            1 => SymbolKind::Class,
            2 => SymbolKind::Other,
            other => return Err(Cursor::corrupt(&format!("unknown symbol kind {other}"))),
        };
        let path = cur.string("symbol path")?;
        let line = cur.u32("symbol line")?;
        if name.is_empty() {
            return Err(Cursor::corrupt("empty symbol name"));
        }
        out.push(SymbolEntry { name, kind, path, line });
    }
    if !cur.finished() {
        return Err(Cursor::corrupt("trailing bytes in symbols"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shard::build_shard;

    fn sample_shard() -> Shard {
        build_shard(
            "projA",
            "r1",
            vec![
                ("a.py".into(), b"def f():\n    return g()\n".to_vec(), Language::Python),
                ("b.kt".into(), b"fun g(): Int = 42\n".to_vec(), Language::Kotlin),
                ("notes.txt".into(), b"plain text here\n".to_vec(), Language::Other),
            ],
        )
        .unwrap()
    }

    fn to_bytes(shard: &Shard) -> Vec<u8> {
        let mut buf = Vec::new();
        write_shard(shard, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_exact() {
        let shard = sample_shard();
        let bytes = to_bytes(&shard);
        let back = read_shard_bytes(&bytes).unwrap();
        assert_eq!(shard, back);
    }

    #[test]
    fn serialization_is_deterministic() {
        assert_eq!(to_bytes(&sample_shard()), to_bytes(&sample_shard()));
    }

    #[test]
    fn bad_magic_is_corrupt() {
        let mut bytes = to_bytes(&sample_shard());
        bytes[0] = b'X';
        match read_shard_bytes(&bytes) {
            Err(ShardReadError::Corrupt(msg)) => assert!(msg.contains("magic")),
            other => panic!("expected Corrupt, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version_is_version_mismatch() {
        let mut shard = sample_shard();
        shard.meta.format_version = 99;
        let bytes = to_bytes(&shard);
        match read_shard_bytes(&bytes) {
            Err(ShardReadError::VersionMismatch { found: 99 }) => {}
            other => panic!("expected VersionMismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncation_is_corrupt() {
        let bytes = to_bytes(&sample_shard());
        for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(read_shard_bytes(&bytes[..cut]), Err(ShardReadError::Corrupt(_))),
                "cut at {cut} should be corrupt"
            );
        }
    }

    #[test]
    fn payload_flip_is_checksum_mismatch() {
        let bytes = to_bytes(&sample_shard());
        // flip a byte inside the meta payload (past magic + section header)
        let mut flipped = bytes.clone();
        flipped[12] ^= 0xff;
        match read_shard_bytes(&flipped) {
            Err(ShardReadError::Corrupt(_)) | Err(ShardReadError::VersionMismatch { .. }) => {}
            other => panic!("expected an error, got {other:?}"),
        }
    }

    #[test]
    fn trailing_garbage_is_corrupt() {
        let mut bytes = to_bytes(&sample_shard());
        bytes.push(0);
        assert!(matches!(read_shard_bytes(&bytes), Err(ShardReadError::Corrupt(_))));
    }
}
