//! JSON bodies of the HTTP API. `schema/api.schema.json` describes the same
//! shapes for clients; the service tests validate live responses against it.

use serde::{Deserialize, Serialize};

use kgcl::acquisition::{Acknowledgment, Answer, Question, Verdict};
use kgcl::engine::{DetectOutcome, SessionRecord, TrainingStatus};
use kgcl::kb::{KbStats, NamedTriple, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleBody {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl From<&NamedTriple> for TripleBody {
    fn from(t: &NamedTriple) -> Self {
        Self { head: t.head.clone(), relation: t.relation.clone(), tail: t.tail.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionBody {
    pub id: u64,
    pub triple: TripleBody,
    pub text: String,
    pub correction_prompt: String,
    pub state: String,
    pub created_at: u64,
}

impl From<&Question> for QuestionBody {
    fn from(q: &Question) -> Self {
        Self {
            id: q.id,
            triple: (&q.named).into(),
            text: q.text.clone(),
            correction_prompt: q.correction_prompt.clone(),
            state: q.state.as_str().to_owned(),
            created_at: q.created_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextQuestionResponse {
    pub revision: u64,
    pub question: Option<QuestionBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub answer: Answer,
    #[serde(default)]
    pub correction: Option<String>,
}

impl AnswerRequest {
    pub fn verdict(&self, question_id: u64) -> Verdict {
        Verdict { question_id, answer: self.answer, correction: self.correction.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcknowledgmentBody {
    pub question_id: u64,
    pub committed: TripleBody,
    pub source: String,
    pub new: bool,
    pub message: String,
}

impl From<&Acknowledgment> for AcknowledgmentBody {
    fn from(a: &Acknowledgment) -> Self {
        Self {
            question_id: a.question_id,
            committed: (&a.committed).into(),
            source: a.source.as_str().to_owned(),
            new: a.new,
            message: a.message.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub revision: u64,
    pub acknowledgment: AcknowledgmentBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRequest {
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResponse {
    pub revision: u64,
    pub accepted: bool,
    pub action: String,
    pub questions: Vec<QuestionBody>,
}

impl DetectionResponse {
    pub fn new(revision: u64, out: &DetectOutcome) -> Self {
        let action = serde_json::to_value(out.action).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        Self { revision, accepted: out.accepted, action, questions: out.questions.iter().map(Into::into).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsResponse {
    pub revision: u64,
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
}

impl StatsResponse {
    pub fn new(revision: u64, s: KbStats) -> Self {
        Self { revision, entities: s.entities, relations: s.relations, triples: s.triples }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbTripleBody {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub source: String,
    pub session: u32,
    pub timestamp: u64,
}

impl KbTripleBody {
    pub fn new(t: &NamedTriple, p: &Provenance) -> Self {
        Self {
            head: t.head.clone(),
            relation: t.relation.clone(),
            tail: t.tail.clone(),
            source: p.source.as_str().to_owned(),
            session: p.session,
            timestamp: p.timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriplesResponse {
    pub revision: u64,
    pub entity: String,
    pub triples: Vec<KbTripleBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusResponse {
    pub revision: u64,
    #[serde(flatten)]
    pub status: TrainingStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionBody {
    pub session: usize,
    pub trained_triples: usize,
    pub replayed: usize,
    pub kb_triples: usize,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_dev_mrr: f64,
    pub heldout_mrr: Option<f64>,
    pub heldout_hits_at_10: Option<f64>,
}

impl From<&SessionRecord> for SessionBody {
    fn from(r: &SessionRecord) -> Self {
        Self {
            session: r.session,
            trained_triples: r.trained_triples,
            replayed: r.replayed,
            kb_triples: r.kb_triples,
            best_epoch: r.best_epoch,
            stopped_epoch: r.stopped_epoch,
            initial_loss: r.initial_loss,
            best_loss: r.best_loss,
            best_dev_mrr: r.best_dev_mrr,
            heldout_mrr: r.heldout.map(|m| m.mrr),
            heldout_hits_at_10: r.heldout.map(|m| m.hits_at_10),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionsResponse {
    pub revision: u64,
    pub sessions: Vec<SessionBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub status: u16,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub revision: u64,
    pub error: ErrorBody,
}
