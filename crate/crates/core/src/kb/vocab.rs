use std::collections::HashMap;

use super::{EntityId, KbError, RelationId};

/// Dense name <-> id table. Ids are assigned in registration order and
/// never reused.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn from_names(names: Vec<String>) -> Result<Self, KbError> {
        let mut interner = Interner::new();
        for name in names {
            validate_name(&name)?;
            if interner.ids.contains_key(&name) {
                return Err(KbError::Corrupt(format!("duplicate vocabulary name {name:?}")));
            }
            interner.intern(&name);
        }
        Ok(interner)
    }

    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = u32::try_from(self.names.len()).expect("vocabulary exceeds u32 ids");
        self.names.push(name.to_owned());
        self.ids.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<u32> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: u32) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Names must be non-empty and must not contain tab or newline characters,
/// since they are written verbatim into tab-separated triple files.
pub fn validate_name(name: &str) -> Result<(), KbError> {
    if name.is_empty() {
        return Err(KbError::InvalidName { name: name.to_owned(), reason: "empty" });
    }
    if name.contains(['\t', '\n', '\r']) {
        return Err(KbError::InvalidName {
            name: name.to_owned(),
            reason: "contains tab or newline",
        });
    }
    Ok(())
}

/// Growable entity and relation vocabularies.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    entities: Interner,
    relations: Interner,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn from_parts(entities: Interner, relations: Interner) -> Self {
        Self { entities, relations }
    }

    /// Returns the id of `name`, registering it if unseen.
    pub fn register_entity(&mut self, name: &str) -> Result<EntityId, KbError> {
        validate_name(name)?;
        Ok(EntityId(self.entities.intern(name)))
    }

    pub fn register_relation(&mut self, name: &str) -> Result<RelationId, KbError> {
        validate_name(name)?;
        Ok(RelationId(self.relations.intern(name)))
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entities.get(name).map(EntityId)
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relations.get(name).map(RelationId)
    }

    pub fn entity_name(&self, id: EntityId) -> Option<&str> {
        self.entities.name(id.0)
    }

    pub fn relation_name(&self, id: RelationId) -> Option<&str> {
        self.relations.name(id.0)
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entities(&self) -> &Interner {
        &self.entities
    }

    pub fn relations(&self) -> &Interner {
        &self.relations
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> {
        (0..self.relations.len() as u32).map(RelationId)
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.entities.len() as u32).map(EntityId)
    }
}
