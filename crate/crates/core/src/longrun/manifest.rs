use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::LongrunError;
use crate::kb::{export_triples, parse_triple_lines, NamedTriple, Triple, Vocabulary};
use crate::train::SessionDataset;

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Paths of one session's split files, relative to the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub index: usize,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<PathBuf>,
    #[serde(rename = "session", default)]
    pub sessions: Vec<SessionEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LongrunError + '_ {
    move |source| LongrunError::Io { path: path.display().to_string(), source }
}

fn names(vocab: &Vocabulary, triples: &[Triple]) -> Vec<NamedTriple> {
    triples
        .iter()
        .map(|t| {
            NamedTriple::new(
                vocab.entity_name(t.head).expect("registered"),
                vocab.relation_name(t.relation).expect("registered"),
                vocab.entity_name(t.tail).expect("registered"),
            )
        })
        .collect()
}

/// Writes each split as a triple TSV file next to `manifest.toml`, plus the
/// whole world if given. Returns the manifest path.
pub fn write_sessions(
    dir: impl AsRef<Path>,
    vocab: &Vocabulary,
    sessions: &[SessionDataset],
    world: Option<&[NamedTriple]>,
) -> Result<PathBuf, LongrunError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let write = |name: String, triples: &[NamedTriple]| -> Result<PathBuf, LongrunError> {
        let path = dir.join(&name);
        fs::write(&path, export_triples(triples)).map_err(io_err(&path))?;
        Ok(PathBuf::from(name))
    };
    let mut manifest = Manifest::default();
    if let Some(w) = world {
        manifest.world = Some(write("world.tsv".into(), w)?);
    }
    for s in sessions {
        let i = s.index;
        manifest.sessions.push(SessionEntry {
            index: i,
            train: write(format!("session_{i}_train.tsv"), &names(vocab, &s.train))?,
            dev: write(format!("session_{i}_dev.tsv"), &names(vocab, &s.dev))?,
            test: write(format!("session_{i}_test.tsv"), &names(vocab, &s.test))?,
        });
    }
    let path = dir.join(MANIFEST_FILE);
    let text = toml::to_string(&manifest).map_err(|e| LongrunError::Manifest { path: path.display().to_string(), message: e.to_string() })?;
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(path)
}

fn read_split(base: &Path, rel: &Path, vocab: &mut Vocabulary) -> Result<Vec<Triple>, LongrunError> {
    let path = base.join(rel);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let named = parse_triple_lines(&text, &path.display().to_string())?;
    named
        .iter()
        .map(|n| {
            let h = vocab.register_entity(&n.head)?;
            let r = vocab.register_relation(&n.relation)?;
            let t = vocab.register_entity(&n.tail)?;
            Ok(Triple::new(h, r, t))
        })
        .collect()
}

/// One-line rendering of a TOML error, prefixed with its line number.
pub fn toml_message(text: &str, err: &toml::de::Error) -> String {
    match err.span() {
        Some(span) => format!("line {}: {}", text[..span.start].matches('\n').count() + 1, err.message().trim_end()),
        None => err.message().trim_end().to_owned(),
    }
}

/// Loads every session listed in a manifest, interning names in file
/// order. Paths are resolved against the manifest's directory.
pub fn load_sessions(path: impl AsRef<Path>) -> Result<(Vocabulary, Vec<SessionDataset>), LongrunError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: Manifest =
        toml::from_str(&text).map_err(|e| LongrunError::Manifest { path: path.display().to_string(), message: toml_message(&text, &e) })?;
    if manifest.sessions.is_empty() {
        return Err(LongrunError::Manifest { path: path.display().to_string(), message: "no [[session]] entries".into() });
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut vocab = Vocabulary::default();
    let mut sessions = Vec::with_capacity(manifest.sessions.len());
    for (pos, entry) in manifest.sessions.iter().enumerate() {
        if entry.index != pos {
            return Err(LongrunError::Manifest {
                path: path.display().to_string(),
                message: format!("session entries must be listed in order 0, 1, ...; entry {pos} has index {}", entry.index),
            });
        }
        sessions.push(SessionDataset {
            index: entry.index,
            train: read_split(base, &entry.train, &mut vocab)?,
            dev: read_split(base, &entry.dev, &mut vocab)?,
            test: read_split(base, &entry.test, &mut vocab)?,
        });
    }
    Ok((vocab, sessions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::longrun::{generate_world, make_sessions, WorldSpec};

    #[test]
    fn round_trip_preserves_named_sessions() {
        let w = generate_world(&WorldSpec::default()).unwrap();
        let sessions = make_sessions(&w, 6, 0.8, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_sessions(dir.path(), w.kb.vocab(), &sessions, Some(&w.named_triples())).unwrap();
        let (vocab, loaded) = load_sessions(&path).unwrap();
        assert_eq!(loaded.len(), 6);
        for (a, b) in sessions.iter().zip(&loaded) {
            assert_eq!(names(w.kb.vocab(), &a.train), names(&vocab, &b.train));
            assert_eq!(names(w.kb.vocab(), &a.dev), names(&vocab, &b.dev));
            assert_eq!(names(w.kb.vocab(), &a.test), names(&vocab, &b.test));
        }
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("[[session]]"));
    }

    #[test]
    fn malformed_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(MANIFEST_FILE);
        fs::write(&path, "[[session]]\nindex = 0\ntrain = 3\n").unwrap();
        assert!(matches!(load_sessions(&path), Err(LongrunError::Manifest { .. })));
        fs::write(&path, "[[session]]\nindex = 0\ntrain = \"missing.tsv\"\ndev = \"d\"\ntest = \"t\"\n").unwrap();
        assert!(matches!(load_sessions(&path), Err(LongrunError::Io { .. })));
    }
}
