//! Triple TSV files and the binary KB snapshot.
//!
//! Snapshot layout, all integers little-endian:
//!
//! ```text
//! "KGKB" | version u32 | n_entities u32 | (len u32, utf8)* | n_relations u32 | (len u32, utf8)*
//!        | n_records u64 | (head u32, relation u32, tail u32, source u8, session u32, timestamp u64)*
//! ```

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{validate_name, EntityId, Interner, KbError, KnowledgeBase, Provenance, RelationId, Source, Triple, Vocabulary};

pub const KB_MAGIC: &[u8; 4] = b"KGKB";
pub const KB_FORMAT_VERSION: u32 = 1;

/// A triple spelled with names instead of ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NamedTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl NamedTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self { head: head.into(), relation: relation.into(), tail: tail.into() }
    }
}

impl std::fmt::Display for NamedTriple {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.relation, self.tail)
    }
}

/// Parses `head<TAB>relation<TAB>tail` lines. Blank lines and lines starting
/// with `#` are skipped. `origin` is only used in error messages.
pub fn parse_triple_lines(text: &str, origin: &str) -> Result<Vec<NamedTriple>, KbError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |message: String| KbError::Parse { path: origin.to_owned(), line: idx + 1, message };
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        for field in &fields {
            validate_name(field).map_err(|e| parse_err(e.to_string()))?;
        }
        out.push(NamedTriple::new(fields[0], fields[1], fields[2]));
    }
    Ok(out)
}

/// Renders triples in the TSV interchange format.
pub fn export_triples<'a>(triples: impl IntoIterator<Item = &'a NamedTriple>) -> String {
    let mut out = String::new();
    for t in triples {
        let _ = writeln!(out, "{}\t{}\t{}", t.head, t.relation, t.tail);
    }
    out
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KbError + '_ {
    move |source| KbError::Io { path: path.display().to_string(), source }
}

pub(crate) fn encode_kb(kb: &KnowledgeBase) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + kb.len() * 25);
    buf.extend_from_slice(KB_MAGIC);
    buf.extend_from_slice(&KB_FORMAT_VERSION.to_le_bytes());
    for table in [kb.vocab().entities(), kb.vocab().relations()] {
        buf.extend_from_slice(&(table.len() as u32).to_le_bytes());
        for name in table.names() {
            buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
            buf.extend_from_slice(name.as_bytes());
        }
    }
    buf.extend_from_slice(&(kb.len() as u64).to_le_bytes());
    for (t, p) in kb.journal() {
        buf.extend_from_slice(&t.head.0.to_le_bytes());
        buf.extend_from_slice(&t.relation.0.to_le_bytes());
        buf.extend_from_slice(&t.tail.0.to_le_bytes());
        buf.push(p.source.to_byte());
        buf.extend_from_slice(&p.session.to_le_bytes());
        buf.extend_from_slice(&p.timestamp.to_le_bytes());
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], KbError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| KbError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, KbError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, KbError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, KbError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn names(&mut self) -> Result<Vec<String>, KbError> {
        let n = self.u32()? as usize;
        let mut names = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let len = self.u32()? as usize;
            let raw = self.take(len)?;
            let name = std::str::from_utf8(raw).map_err(|e| KbError::Corrupt(e.to_string()))?;
            names.push(name.to_owned());
        }
        Ok(names)
    }
}

pub(crate) fn decode_kb(bytes: &[u8]) -> Result<KnowledgeBase, KbError> {
    if bytes.len() < 8 || &bytes[..4] != KB_MAGIC {
        return Err(KbError::Version("missing KGKB magic header".into()));
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != KB_FORMAT_VERSION {
        return Err(KbError::Version(format!("format version {version}, expected {KB_FORMAT_VERSION}")));
    }
    let entities = Interner::from_names(r.names()?)?;
    let relations = Interner::from_names(r.names()?)?;
    let n = r.u64()? as usize;
    let mut journal = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let triple = Triple::new(EntityId(r.u32()?), RelationId(r.u32()?), EntityId(r.u32()?));
        let source = r.u8()?;
        let source = Source::from_byte(source).ok_or_else(|| KbError::Corrupt(format!("unknown source tag {source}")))?;
        let session = r.u32()?;
        let timestamp = r.u64()?;
        journal.push((triple, Provenance { source, session, timestamp }));
    }
    if r.pos != bytes.len() {
        return Err(KbError::Corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    KnowledgeBase::from_parts(Vocabulary::from_parts(entities, relations), journal)
}

pub fn save_kb(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<(), KbError> {
    let path = path.as_ref();
    std::fs::write(path, encode_kb(kb)).map_err(io_err(path))
}

pub fn load_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase, KbError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode_kb(&bytes)
}
