//! Knowledge acquisition by dialogue. A detected object label becomes
//! predicted triples (phase A), each asked as a question (phase B), and the
//! verdict commits a true triple to the KB (phase C).

mod oracle;
mod templates;

use std::collections::BTreeMap;
use std::sync::mpsc::{channel, Receiver, Sender};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::SimulatedOracle;
pub use templates::{Template, TemplateRegistry, FALLBACK_CORRECTION, FALLBACK_QUESTION};

use crate::kb::{validate_name, EntityId, KbError, KnowledgeBase, NamedTriple, RelationId, Source, Triple};
use crate::model::KgeModel;

/// Questions asked per detection when not configured otherwise.
pub const DEFAULT_QUESTIONS_PER_DETECTION: usize = 2;

#[derive(Debug, Error)]
pub enum AcqError {
    #[error("unknown question {0}")]
    UnknownQuestion(u64),
    #[error("question {0} is already closed")]
    Closed(u64),
    #[error("question {id}: cannot move from {from} to {to}")]
    Transition { id: u64, from: &'static str, to: &'static str },
    #[error("invalid verdict: {0}")]
    InvalidVerdict(String),
    #[error("{origin}:{line}: {message}")]
    Template { origin: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Kb(#[from] KbError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionState {
    Pending,
    AnsweredYes,
    AnsweredNoAwaitingCorrection,
    Closed,
}

impl QuestionState {
    pub fn as_str(self) -> &'static str {
        match self {
            QuestionState::Pending => "pending",
            QuestionState::AnsweredYes => "answered_yes",
            QuestionState::AnsweredNoAwaitingCorrection => "answered_no_awaiting_correction",
            QuestionState::Closed => "closed",
        }
    }

    /// Legal moves: pending to either answered state, either answered
    /// state to closed, and pending straight to closed.
    pub fn can_advance_to(self, next: QuestionState) -> bool {
        use QuestionState::*;
        matches!(
            (self, next),
            (Pending, AnsweredYes) | (Pending, AnsweredNoAwaitingCorrection) | (Pending, Closed)
                | (AnsweredYes, Closed) | (AnsweredNoAwaitingCorrection, Closed)
        )
    }

    pub fn is_open(self) -> bool {
        self != QuestionState::Closed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: u64,
    pub triple: Triple,
    pub named: NamedTriple,
    pub text: String,
    pub correction_prompt: String,
    pub created_at: u64,
    pub state: QuestionState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub question_id: u64,
    pub answer: Answer,
    pub correction: Option<String>,
}

impl Verdict {
    pub fn yes(question_id: u64) -> Self {
        Self { question_id, answer: Answer::Yes, correction: None }
    }

    pub fn no(question_id: u64, correction: impl Into<String>) -> Self {
        Self { question_id, answer: Answer::No, correction: Some(correction.into()) }
    }

    /// A correction must be present exactly when the answer is no.
    pub fn validate(&self) -> Result<(), AcqError> {
        match (self.answer, &self.correction) {
            (Answer::Yes, None) => Ok(()),
            (Answer::Yes, Some(_)) => Err(AcqError::InvalidVerdict("a yes verdict takes no correction".into())),
            (Answer::No, None) => Err(AcqError::InvalidVerdict("a no verdict requires a correction".into())),
            (Answer::No, Some(c)) => validate_name(c).map_err(|e| AcqError::InvalidVerdict(e.to_string())),
        }
    }
}

/// Emitted once per closed question, telling the teacher what was learned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Acknowledgment {
    pub question_id: u64,
    pub committed: NamedTriple,
    pub source: Source,
    /// False when the triple was already known.
    pub new: bool,
    pub message: String,
}

/// Open and closed questions in creation order, plus acknowledgment
/// subscribers.
#[derive(Debug, Default)]
pub struct QuestionQueue {
    questions: BTreeMap<u64, Question>,
    next_id: u64,
    clock: u64,
    subscribers: Vec<Sender<Acknowledgment>>,
}

impl QuestionQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, triple: Triple, named: NamedTriple, registry: &TemplateRegistry) -> &Question {
        let id = self.next_id;
        self.next_id += 1;
        let question = Question {
            id,
            triple,
            text: registry.render_question(&named),
            correction_prompt: registry.render_correction(&named),
            named,
            created_at: self.clock,
            state: QuestionState::Pending,
        };
        self.clock += 1;
        self.questions.entry(id).or_insert(question)
    }

    pub fn get(&self, id: u64) -> Option<&Question> {
        self.questions.get(&id)
    }

    /// Oldest question not yet closed.
    pub fn next_open(&self) -> Option<&Question> {
        self.questions.values().find(|q| q.state.is_open())
    }

    pub fn open(&self) -> impl Iterator<Item = &Question> {
        self.questions.values().filter(|q| q.state.is_open())
    }

    pub fn open_count(&self) -> usize {
        self.open().count()
    }

    pub fn all(&self) -> impl Iterator<Item = &Question> {
        self.questions.values()
    }

    pub fn advance(&mut self, id: u64, next: QuestionState) -> Result<(), AcqError> {
        let q = self.questions.get_mut(&id).ok_or(AcqError::UnknownQuestion(id))?;
        if q.state == QuestionState::Closed {
            return Err(AcqError::Closed(id));
        }
        if !q.state.can_advance_to(next) {
            return Err(AcqError::Transition { id, from: q.state.as_str(), to: next.as_str() });
        }
        q.state = next;
        Ok(())
    }

    /// Records a bare "no" while the teacher is still to name the correct tail.
    pub fn await_correction(&mut self, id: u64) -> Result<&Question, AcqError> {
        self.advance(id, QuestionState::AnsweredNoAwaitingCorrection)?;
        Ok(&self.questions[&id])
    }

    /// Closes a question without committing anything.
    pub fn discard(&mut self, id: u64) -> Result<(), AcqError> {
        self.advance(id, QuestionState::Closed)
    }

    pub fn subscribe(&mut self) -> Receiver<Acknowledgment> {
        let (tx, rx) = channel();
        self.subscribers.push(tx);
        rx
    }

    fn publish(&mut self, ack: &Acknowledgment) {
        self.subscribers.retain(|tx| tx.send(ack.clone()).is_ok());
    }
}

/// Highest-scoring tail for `(head, relation, ?)` other than `head` itself.
/// Ties go to the lower entity id.
pub fn predict_tail(model: &KgeModel, head: EntityId, relation: RelationId) -> Option<EntityId> {
    let mut best: Option<(EntityId, f32)> = None;
    for e in 0..model.num_entities() as u32 {
        let cand = EntityId(e);
        if cand == head {
            continue;
        }
        let s = model.params.score_unchecked(head, relation, cand);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((cand, s));
        }
    }
    best.map(|(e, _)| e)
}

/// Phase A: registers `label` as an entity and queues up to `n` questions,
/// each pairing a distinct, uniformly chosen relation with the predicted
/// tail. The model grows to cover new vocabulary first.
///
/// With no relations known, or no entity other than the label, the
/// detection is journaled as an entity only and no question is produced.
pub fn phase_a<R: Rng + ?Sized>(
    model: &mut KgeModel,
    kb: &mut KnowledgeBase,
    registry: &TemplateRegistry,
    queue: &mut QuestionQueue,
    label: &str,
    n: usize,
    rng: &mut R,
) -> Result<Vec<u64>, AcqError> {
    let head = kb.register_entity(label)?;
    let vocab = kb.vocab();
    let growth_seed = rng.gen::<u64>();
    model.grow_to(vocab.num_entities(), vocab.num_relations(), growth_seed);
    let n_rel = vocab.num_relations();
    if n == 0 || n_rel == 0 {
        return Ok(Vec::new());
    }
    let relations = rand::seq::index::sample(rng, n_rel, n.min(n_rel));
    let mut ids = Vec::with_capacity(relations.len());
    for r in relations.iter() {
        let relation = RelationId(r as u32);
        let Some(tail) = predict_tail(model, head, relation) else { continue };
        let triple = Triple::new(head, relation, tail);
        let named = kb.names(&triple).expect("ids come from the KB vocabulary");
        ids.push(queue.push(triple, named, registry).id);
    }
    Ok(ids)
}

/// Phase C: applies a verdict, commits the resulting true triple and closes
/// the question.
///
/// A yes commits the asked triple. A no commits `(head, relation,
/// correction)`, registering the correction as a new entity if needed.
/// Corrections name entities only; relations are never created here.
pub fn phase_c(
    kb: &mut KnowledgeBase,
    queue: &mut QuestionQueue,
    verdict: &Verdict,
    session: u32,
) -> Result<Acknowledgment, AcqError> {
    let id = verdict.question_id;
    let question = queue.get(id).ok_or(AcqError::UnknownQuestion(id))?;
    if !question.state.is_open() {
        return Err(AcqError::Closed(id));
    }
    verdict.validate()?;
    let (answered, source) = match verdict.answer {
        Answer::Yes => (QuestionState::AnsweredYes, Source::PredictedConfirmed),
        Answer::No => (QuestionState::AnsweredNoAwaitingCorrection, Source::HumanCorrected),
    };
    if question.state != answered && !question.state.can_advance_to(answered) {
        return Err(AcqError::Transition { id, from: question.state.as_str(), to: answered.as_str() });
    }
    let asked = question.triple;

    let triple = match &verdict.correction {
        None => asked,
        Some(name) => asked.with_tail(kb.register_entity(name)?),
    };
    let new = kb.add_triple(triple, source, session)?;
    if queue.get(id).map(|q| q.state) == Some(QuestionState::Pending) {
        queue.advance(id, answered)?;
    }
    queue.advance(id, QuestionState::Closed)?;

    let committed = kb.names(&triple).expect("committed triple uses registered names");
    let message = if new { format!("Thanks, I learned that {committed}.") } else { format!("Thanks, I already knew that {committed}.") };
    let ack = Acknowledgment { question_id: id, committed, source, new, message };
    queue.publish(&ack);
    Ok(ack)
}
