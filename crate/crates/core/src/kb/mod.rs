//! Knowledge base: an append-only journal of triples with provenance over
//! growable entity and relation vocabularies.
//!
//! The journal only ever grows. Duplicate triples are suppressed, and the
//! provenance of the first insertion is kept.

mod io;
mod vocab;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{export_triples, load_kb, parse_triple_lines, save_kb, NamedTriple, KB_FORMAT_VERSION, KB_MAGIC};
pub use vocab::{validate_name, Interner, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One `(head, relation, tail)` fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Self { head, relation, tail }
    }

    pub fn with_head(self, head: EntityId) -> Self {
        Self { head, ..self }
    }

    pub fn with_tail(self, tail: EntityId) -> Self {
        Self { tail, ..self }
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head.0, self.relation.0, self.tail.0)
    }
}

/// Which acquisition path produced a fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Imported,
    PredictedConfirmed,
    HumanCorrected,
}

impl Source {
    pub(crate) fn to_byte(self) -> u8 {
        match self {
            Source::Imported => 0,
            Source::PredictedConfirmed => 1,
            Source::HumanCorrected => 2,
        }
    }

    pub(crate) fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Source::Imported),
            1 => Some(Source::PredictedConfirmed),
            2 => Some(Source::HumanCorrected),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Imported => "imported",
            Source::PredictedConfirmed => "predicted-confirmed",
            Source::HumanCorrected => "human-corrected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: Source,
    pub session: u32,
    /// Position in the KB's monotonic insertion clock.
    pub timestamp: u64,
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("invalid name {name:?}: {reason}")]
    InvalidName { name: String, reason: &'static str },
    #[error("triple {0} references an unregistered id")]
    Integrity(Triple),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("unsupported KB snapshot: {0}")]
    Version(String),
    #[error("corrupt KB snapshot: {0}")]
    Corrupt(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Anything that can answer "is this triple known to be true".
pub trait TripleSet {
    fn contains(&self, triple: &Triple) -> bool;
}

impl TripleSet for HashSet<Triple> {
    fn contains(&self, triple: &Triple) -> bool {
        HashSet::contains(self, triple)
    }
}

impl<T: TripleSet + ?Sized> TripleSet for &T {
    fn contains(&self, triple: &Triple) -> bool {
        (**self).contains(triple)
    }
}

/// Value snapshot of the KB's size, safe to hand to other threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbStats {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    vocab: Vocabulary,
    journal: Vec<(Triple, Provenance)>,
    positives: HashSet<Triple>,
    clock: u64,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn register_entity(&mut self, name: &str) -> Result<EntityId, KbError> {
        self.vocab.register_entity(name)
    }

    pub fn register_relation(&mut self, name: &str) -> Result<RelationId, KbError> {
        self.vocab.register_relation(name)
    }

    /// Registers all three names and returns the id triple.
    pub fn intern_triple(&mut self, head: &str, relation: &str, tail: &str) -> Result<Triple, KbError> {
        validate_name(head)?;
        validate_name(relation)?;
        validate_name(tail)?;
        Ok(Triple::new(
            self.vocab.register_entity(head)?,
            self.vocab.register_relation(relation)?,
            self.vocab.register_entity(tail)?,
        ))
    }

    /// Resolves names to ids without registering anything.
    pub fn lookup(&self, head: &str, relation: &str, tail: &str) -> Option<Triple> {
        Some(Triple::new(
            self.vocab.entity_id(head)?,
            self.vocab.relation_id(relation)?,
            self.vocab.entity_id(tail)?,
        ))
    }

    pub fn names(&self, triple: &Triple) -> Option<NamedTriple> {
        Some(NamedTriple {
            head: self.vocab.entity_name(triple.head)?.to_owned(),
            relation: self.vocab.relation_name(triple.relation)?.to_owned(),
            tail: self.vocab.entity_name(triple.tail)?.to_owned(),
        })
    }

    fn check_ids(&self, triple: &Triple) -> Result<(), KbError> {
        let n_ent = self.vocab.num_entities();
        if triple.head.index() >= n_ent
            || triple.tail.index() >= n_ent
            || triple.relation.index() >= self.vocab.num_relations()
        {
            return Err(KbError::Integrity(*triple));
        }
        Ok(())
    }

    /// Appends `triple` unless it is already known. Returns whether it was added.
    pub fn add_triple(&mut self, triple: Triple, source: Source, session: u32) -> Result<bool, KbError> {
        self.check_ids(&triple)?;
        if !self.positives.insert(triple) {
            return Ok(false);
        }
        let provenance = Provenance { source, session, timestamp: self.clock };
        self.clock += 1;
        self.journal.push((triple, provenance));
        Ok(true)
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.positives.contains(triple)
    }

    pub fn len(&self) -> usize {
        self.journal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.journal.is_empty()
    }

    pub fn journal(&self) -> &[(Triple, Provenance)] {
        &self.journal
    }

    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.journal.iter().map(|(t, _)| *t)
    }

    pub fn provenance(&self, triple: &Triple) -> Option<Provenance> {
        self.journal.iter().find(|(t, _)| t == triple).map(|(_, p)| *p)
    }

    /// All known tails of `(head, relation, ?)`, in journal order.
    pub fn tails(&self, head: EntityId, relation: RelationId) -> Vec<EntityId> {
        self.journal
            .iter()
            .filter(|(t, _)| t.head == head && t.relation == relation)
            .map(|(t, _)| t.tail)
            .collect()
    }

    /// Triples mentioning `entity` on either side.
    pub fn triples_about(&self, entity: EntityId) -> Vec<(Triple, Provenance)> {
        self.journal
            .iter()
            .filter(|(t, _)| t.head == entity || t.tail == entity)
            .copied()
            .collect()
    }

    pub fn stats(&self) -> KbStats {
        KbStats {
            entities: self.vocab.num_entities(),
            relations: self.vocab.num_relations(),
            triples: self.journal.len(),
        }
    }

    /// Reads a tab-separated triple file, registering unseen names, and adds
    /// every triple with `Source::Imported`. Returns the number of newly
    /// added triples. The KB is left untouched if any line is malformed.
    pub fn import_triples(&mut self, path: impl AsRef<std::path::Path>, session: u32) -> Result<usize, KbError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let named = parse_triple_lines(&text, &path.display().to_string())?;
        self.import_named(&named, session)
    }

    pub fn import_named(&mut self, triples: &[NamedTriple], session: u32) -> Result<usize, KbError> {
        let mut added = 0;
        for t in triples {
            let triple = self.intern_triple(&t.head, &t.relation, &t.tail)?;
            if self.add_triple(triple, Source::Imported, session)? {
                added += 1;
            }
        }
        Ok(added)
    }

    pub(crate) fn from_parts(vocab: Vocabulary, journal: Vec<(Triple, Provenance)>) -> Result<Self, KbError> {
        let mut kb = KnowledgeBase { vocab, ..Default::default() };
        for (triple, provenance) in journal {
            kb.check_ids(&triple)?;
            if !kb.positives.insert(triple) {
                return Err(KbError::Corrupt(format!("duplicate journal entry {triple}")));
            }
            kb.clock = kb.clock.max(provenance.timestamp + 1);
            kb.journal.push((triple, provenance));
        }
        Ok(kb)
    }
}

impl TripleSet for KnowledgeBase {
    fn contains(&self, triple: &Triple) -> bool {
        self.positives.contains(triple)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kb_with_names() -> (KnowledgeBase, Triple) {
        let mut kb = KnowledgeBase::new();
        let t = kb.intern_triple("bottle", "hasMaterial", "plastic").unwrap();
        (kb, t)
    }

    #[test]
    fn add_then_duplicate() {
        let (mut kb, t) = kb_with_names();
        assert!(kb.add_triple(t, Source::Imported, 0).unwrap());
        assert_eq!(kb.len(), 1);
        assert!(!kb.add_triple(t, Source::HumanCorrected, 3).unwrap());
        assert_eq!(kb.len(), 1);
        // first insertion's provenance wins
        assert_eq!(kb.provenance(&t).unwrap().source, Source::Imported);
    }

    #[test]
    fn unregistered_tail_is_an_integrity_error() {
        let (mut kb, t) = kb_with_names();
        let bad = t.with_tail(EntityId(99));
        assert!(matches!(kb.add_triple(bad, Source::Imported, 0), Err(KbError::Integrity(_))));
        assert!(kb.is_empty());
    }

    #[test]
    fn contains_on_empty_and_after_add() {
        let (mut kb, t) = kb_with_names();
        assert!(!kb.contains(&t));
        kb.add_triple(t, Source::Imported, 0).unwrap();
        assert!(kb.contains(&t));
    }

    #[test]
    fn contains_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut kb = KnowledgeBase::new();
        for i in 0..20 {
            kb.register_entity(&format!("e{i}")).unwrap();
        }
        for i in 0..3 {
            kb.register_relation(&format!("r{i}")).unwrap();
        }
        let random_triple = |rng: &mut ChaCha8Rng| {
            Triple::new(
                EntityId(rng.gen_range(0..20)),
                RelationId(rng.gen_range(0..3)),
                EntityId(rng.gen_range(0..20)),
            )
        };
        for _ in 0..300 {
            let t = random_triple(&mut rng);
            kb.add_triple(t, Source::Imported, 0).unwrap();
        }
        for _ in 0..1000 {
            let q = random_triple(&mut rng);
            let scan = kb.journal().iter().any(|(t, _)| *t == q);
            assert_eq!(kb.contains(&q), scan);
        }
    }

    #[test]
    fn timestamps_are_monotonic() {
        let mut kb = KnowledgeBase::new();
        for i in 0..5 {
            let t = kb.intern_triple(&format!("h{i}"), "r", "t").unwrap();
            kb.add_triple(t, Source::PredictedConfirmed, 2).unwrap();
        }
        let stamps: Vec<_> = kb.journal().iter().map(|(_, p)| p.timestamp).collect();
        assert!(stamps.windows(2).all(|w| w[0] < w[1]));
    }

    proptest! {
        #[test]
        fn journal_only_grows(ops in proptest::collection::vec((0u32..6, 0u32..2, 0u32..6), 1..80)) {
            let mut kb = KnowledgeBase::new();
            for i in 0..6 { kb.register_entity(&format!("e{i}")).unwrap(); }
            for i in 0..2 { kb.register_relation(&format!("r{i}")).unwrap(); }
            for (h, r, t) in ops {
                let before = kb.journal().to_vec();
                kb.add_triple(Triple::new(EntityId(h), RelationId(r), EntityId(t)), Source::Imported, 0).unwrap();
                prop_assert!(kb.journal().len() >= before.len());
                prop_assert_eq!(&kb.journal()[..before.len()], &before[..]);
                let distinct: HashSet<_> = kb.triples().collect();
                prop_assert_eq!(distinct.len(), kb.len());
            }
        }
    }
}
