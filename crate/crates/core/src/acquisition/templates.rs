use std::collections::BTreeMap;
use std::path::Path;

use super::AcqError;
use crate::kb::NamedTriple;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    pub question: String,
    pub correction: String,
}

impl Template {
    pub fn new(question: &str, correction: &str) -> Self {
        Self { question: question.to_owned(), correction: correction.to_owned() }
    }
}

/// Relation name to question and correction-prompt templates.
///
/// Templates use `{head}`, `{relation}` and `{tail}` slots. Relations
/// without an entry use the generic fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    templates: BTreeMap<String, Template>,
    fallback: Template,
}

pub const FALLBACK_QUESTION: &str = "Is it true that {head} {relation} {tail}?";
pub const FALLBACK_CORRECTION: &str = "What is the correct {relation} for {head}?";

impl Default for TemplateRegistry {
    fn default() -> Self {
        let mut registry = Self::empty();
        for (rel, q, c) in [
            ("objInLoc", "Is the {head} in the {tail}?", "Where is the {head}?"),
            ("hasMaterial", "Is the {head} made of {tail}?", "What is the {head} made of?"),
            ("hasColor", "Is the {head} {tail}?", "What color is the {head}?"),
            ("canContain", "Can the {head} contain the {tail}?", "What can the {head} contain?"),
            ("nearTo", "Is the {head} near the {tail}?", "What is the {head} near to?"),
        ] {
            registry.templates.insert(rel.to_owned(), Template::new(q, c));
        }
        registry
    }
}

fn fill(template: &str, triple: &NamedTriple) -> String {
    template
        .replace("{head}", &triple.head)
        .replace("{relation}", &triple.relation)
        .replace("{tail}", &triple.tail)
}

impl TemplateRegistry {
    /// Registry with only the generic fallback.
    pub fn empty() -> Self {
        Self { templates: BTreeMap::new(), fallback: Template::new(FALLBACK_QUESTION, FALLBACK_CORRECTION) }
    }

    pub fn insert(&mut self, relation: &str, template: Template) {
        self.templates.insert(relation.to_owned(), template);
    }

    pub fn get(&self, relation: &str) -> &Template {
        self.templates.get(relation).unwrap_or(&self.fallback)
    }

    pub fn relations(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    pub fn render_question(&self, triple: &NamedTriple) -> String {
        fill(&self.get(&triple.relation).question, triple)
    }

    pub fn render_correction(&self, triple: &NamedTriple) -> String {
        fill(&self.get(&triple.relation).correction, triple)
    }

    /// Parses `relation<TAB>question<TAB>correction` lines on top of the
    /// built-in defaults. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self, AcqError> {
        let mut registry = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| AcqError::Template { origin: origin.to_owned(), line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            let [rel, q, c] = fields[..] else {
                return Err(err(format!("expected 3 tab-separated fields, found {}", fields.len())));
            };
            if rel.is_empty() {
                return Err(err("empty relation name".into()));
            }
            if !q.contains("{head}") || !q.contains("{tail}") {
                return Err(err("question template must contain {head} and {tail}".into()));
            }
            if !c.contains("{head}") {
                return Err(err("correction template must contain {head}".into()));
            }
            registry.insert(rel, Template::new(q, c));
        }
        Ok(registry)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AcqError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| AcqError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }
}
