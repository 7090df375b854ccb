//! The acquisition and training engine: KB, model, question queue and
//! scheduler behind one mutation API. The long-run simulator, the terminal
//! teaching loop and the HTTP service all drive an [`Engine`]; none of them
//! touch the pieces directly.

use std::collections::HashSet;
use std::sync::mpsc::Receiver;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::acquisition::{phase_a, phase_c, AcqError, Acknowledgment, Question, QuestionQueue, TemplateRegistry, Verdict, DEFAULT_QUESTIONS_PER_DETECTION};
use crate::eval::{evaluate_split, EvalError, Protocol, SplitMetrics};
use crate::kb::{KbError, KbStats, KnowledgeBase, NamedTriple, Triple};
use crate::longrun::{Action, Condition, Event, SchedulerError, SchedulerMode, SchedulerState};
use crate::model::{KgeModel, ModelError};
use crate::train::{train_session, ContinualStrategy, ReplayPool, SessionDataset, TrainConfig, TrainError, TrainReport};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Acquisition(#[from] AcqError),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("training requested while {0}")]
    NotTraining(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub train: TrainConfig,
    pub condition: Condition,
    pub questions_per_detection: usize,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            condition: Condition::default(),
            questions_per_detection: DEFAULT_QUESTIONS_PER_DETECTION,
            seed: 0,
        }
    }
}

/// Result of offering a detection to the engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectOutcome {
    /// False when the robot was not exploring; nothing was recorded.
    pub accepted: bool,
    pub questions: Vec<Question>,
    pub action: Action,
}

/// Summary of one completed training session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session: usize,
    pub trained_triples: usize,
    pub replayed: usize,
    pub kb_triples: usize,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_dev_mrr: f64,
    /// Filtered metrics on the evaluation slice, when one is configured.
    pub heldout: Option<SplitMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStatus {
    pub mode: SchedulerMode,
    pub battery: f64,
    pub clock: u64,
    pub acquired_since_train: usize,
    pub condition: Condition,
    pub sessions_completed: usize,
    pub training_due: bool,
    pub open_questions: usize,
    pub untrained_triples: usize,
}

struct Evaluation {
    heldout: Vec<NamedTriple>,
    truth: Vec<NamedTriple>,
}

pub struct Engine {
    kb: KnowledgeBase,
    model: KgeModel,
    queue: QuestionQueue,
    registry: TemplateRegistry,
    scheduler: SchedulerState,
    config: EngineConfig,
    rng: ChaCha8Rng,
    replay: ReplayPool,
    trained_upto: usize,
    /// Index of the first session this engine trains; 1 when resumed.
    first_session: usize,
    training_due: bool,
    reports: Vec<TrainReport>,
    sessions: Vec<SessionRecord>,
    evaluation: Option<Evaluation>,
    revision: u64,
}

impl Engine {
    pub fn new(kb: KnowledgeBase, registry: TemplateRegistry, config: EngineConfig) -> Result<Self, EngineError> {
        config.train.validate()?;
        let vocab = kb.vocab();
        let model = KgeModel::new(
            vocab.num_entities(),
            vocab.num_relations(),
            config.train.shape()?,
            config.train.learning_rate,
            config.seed,
        )?;
        Self::build(kb, model, registry, config, false)
    }

    /// Resumes from a trained model. Rows missing for KB entities or
    /// relations are initialized; every KB triple counts as trained.
    pub fn with_model(kb: KnowledgeBase, model: KgeModel, registry: TemplateRegistry, config: EngineConfig) -> Result<Self, EngineError> {
        Self::build(kb, model, registry, config, true)
    }

    fn build(
        kb: KnowledgeBase,
        mut model: KgeModel,
        registry: TemplateRegistry,
        config: EngineConfig,
        trained: bool,
    ) -> Result<Self, EngineError> {
        config.train.validate()?;
        model.grow_to(kb.vocab().num_entities(), kb.vocab().num_relations(), config.seed);
        let mut replay = ReplayPool::new(config.train.replay_fraction)?;
        let trained_upto = if trained { kb.journal().len() } else { 0 };
        if trained_upto > 0 {
            let past = kb.journal().iter().map(|(t, _)| *t).collect();
            replay.end_session(&SessionDataset { index: 0, train: past, dev: Vec::new(), test: Vec::new() });
        }
        Ok(Self {
            scheduler: SchedulerState::new(config.condition, 0)?,
            replay,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            kb,
            model,
            queue: QuestionQueue::new(),
            registry,
            config,
            trained_upto,
            first_session: usize::from(trained_upto > 0),
            training_due: false,
            reports: Vec::new(),
            sessions: Vec::new(),
            evaluation: None,
            revision: 0,
        })
    }

    /// Scores held-out triples after every training session, filtering
    /// against `truth`. Names unknown to the KB are skipped.
    pub fn set_evaluation(&mut self, heldout: Vec<NamedTriple>, truth: Vec<NamedTriple>) {
        self.evaluation = Some(Evaluation { heldout, truth });
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn model(&self) -> &KgeModel {
        &self.model
    }

    pub fn queue(&self) -> &QuestionQueue {
        &self.queue
    }

    pub fn scheduler(&self) -> &SchedulerState {
        &self.scheduler
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn reports(&self) -> &[TrainReport] {
        &self.reports
    }

    pub fn sessions(&self) -> &[SessionRecord] {
        &self.sessions
    }

    /// Increases on every state change.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn stats(&self) -> KbStats {
        self.kb.stats()
    }

    pub fn subscribe(&mut self) -> Receiver<Acknowledgment> {
        self.queue.subscribe()
    }

    pub fn next_question(&self) -> Option<&Question> {
        self.queue.next_open()
    }

    pub fn question(&self, id: u64) -> Option<&Question> {
        self.queue.get(id)
    }

    pub fn training_due(&self) -> bool {
        self.training_due
    }

    pub fn status(&self) -> TrainingStatus {
        TrainingStatus {
            mode: self.scheduler.mode,
            battery: self.scheduler.battery,
            clock: self.scheduler.clock,
            acquired_since_train: self.scheduler.acquired_since_train,
            condition: self.scheduler.condition,
            sessions_completed: self.sessions.len(),
            training_due: self.training_due,
            open_questions: self.queue.open_count(),
            untrained_triples: self.kb.journal().len() - self.trained_upto,
        }
    }

    /// Triples about `entity` with their provenance, in journal order.
    pub fn triples_about(&self, entity: &str) -> Vec<(NamedTriple, crate::kb::Provenance)> {
        let Some(id) = self.kb.vocab().entity_id(entity) else { return Vec::new() };
        self.kb
            .triples_about(id)
            .into_iter()
            .map(|(t, p)| (self.kb.names(&t).expect("journaled triple"), p))
            .collect()
    }

    fn bump(&mut self) {
        self.revision += 1;
    }

    fn acquisition_session(&self) -> u32 {
        (self.first_session + self.sessions.len()) as u32 + 1
    }

    fn on_action(&mut self, action: Action) -> Result<(), EngineError> {
        if action == Action::StartTraining {
            self.training_due = true;
        }
        self.maybe_train()
    }

    /// Phase A for one detected label. Detections are ignored unless the
    /// robot is exploring.
    pub fn detect(&mut self, label: &str) -> Result<DetectOutcome, EngineError> {
        if self.scheduler.mode != SchedulerMode::Exploring {
            return Ok(DetectOutcome { accepted: false, questions: Vec::new(), action: Action::None });
        }
        let ids = phase_a(
            &mut self.model,
            &mut self.kb,
            &self.registry,
            &mut self.queue,
            label,
            self.config.questions_per_detection,
            &mut self.rng,
        )?;
        let questions = ids.iter().map(|id| self.queue.get(*id).expect("just queued").clone()).collect();
        let action = self.scheduler.apply(Event::DetectionAcquired)?;
        self.bump();
        self.on_action(action)?;
        Ok(DetectOutcome { accepted: true, questions, action })
    }

    /// Phase C. Training that was waiting for the queue to drain starts
    /// once the last open question is closed.
    pub fn answer(&mut self, verdict: &Verdict) -> Result<Acknowledgment, EngineError> {
        let session = self.acquisition_session();
        let ack = phase_c(&mut self.kb, &mut self.queue, verdict, session)?;
        self.bump();
        self.maybe_train()?;
        Ok(ack)
    }

    /// Records a "no" whose correction will follow in a second verdict.
    pub fn reject(&mut self, question_id: u64) -> Result<Question, EngineError> {
        let q = self.queue.await_correction(question_id)?.clone();
        self.bump();
        Ok(q)
    }

    /// Closes a question nobody can answer.
    pub fn discard(&mut self, question_id: u64) -> Result<(), EngineError> {
        self.queue.discard(question_id)?;
        self.bump();
        self.maybe_train()
    }

    pub fn tick(&mut self) -> Result<Action, EngineError> {
        let action = self.scheduler.apply(Event::Tick)?;
        self.bump();
        self.on_action(action)?;
        Ok(action)
    }

    fn maybe_train(&mut self) -> Result<(), EngineError> {
        if self.training_due && self.queue.open_count() == 0 {
            self.train_now()?;
        }
        Ok(())
    }

    /// Trains on every triple journaled since the previous session, with
    /// replay from earlier ones, then tells the scheduler training is over.
    pub fn train_now(&mut self) -> Result<Option<TrainReport>, EngineError> {
        if !self.scheduler.record_training_step() {
            return Err(EngineError::NotTraining(self.scheduler.mode.as_str()));
        }
        self.training_due = false;
        let fresh: Vec<Triple> = self.kb.journal()[self.trained_upto..].iter().map(|(t, _)| *t).collect();
        let vocab = self.kb.vocab();
        let index = self.first_session + self.sessions.len();
        self.model.grow_to(vocab.num_entities(), vocab.num_relations(), self.config.seed ^ (index as u64 + 1));

        let mut report = None;
        if !fresh.is_empty() {
            let dataset = SessionDataset { index, train: fresh.clone(), dev: Vec::new(), test: Vec::new() };
            let mut cfg = self.config.train.clone();
            cfg.seed = self.config.seed.wrapping_add(index as u64);
            let (model, r) = train_session(&self.model, &dataset, &self.replay, &cfg)?;
            self.model = model;
            self.replay.end_session(&dataset);
            self.trained_upto = self.kb.journal().len();
            let heldout = self.evaluate_heldout()?;
            self.sessions.push(SessionRecord {
                session: index,
                trained_triples: fresh.len(),
                replayed: r.replayed,
                kb_triples: self.kb.len(),
                best_epoch: r.best_epoch,
                stopped_epoch: r.stopped_epoch,
                initial_loss: r.initial_loss(),
                best_loss: r.best().loss,
                best_dev_mrr: r.best().dev_mrr,
                heldout,
            });
            self.reports.push(r.clone());
            report = Some(r);
        }
        let action = self.scheduler.apply(Event::TrainingFinished)?;
        self.bump();
        debug_assert_ne!(action, Action::StartTraining);
        Ok(report)
    }

    fn evaluate_heldout(&self) -> Result<Option<SplitMetrics>, EngineError> {
        let Some(eval) = &self.evaluation else { return Ok(None) };
        let lookup = |n: &NamedTriple| self.kb.lookup(&n.head, &n.relation, &n.tail);
        let split: Vec<Triple> = eval.heldout.iter().filter_map(lookup).collect();
        if split.is_empty() {
            return Ok(None);
        }
        let known: HashSet<Triple> = eval.truth.iter().filter_map(lookup).chain(self.kb.triples()).collect();
        Ok(Some(evaluate_split(&self.model.params, &split, &known, Protocol::Filtered)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::Source;

    fn engine(n: usize) -> Engine {
        let mut kb = KnowledgeBase::new();
        for (h, r, t) in [("apple", "objInLoc", "kitchen"), ("bed", "objInLoc", "bedroom"), ("mug", "hasColor", "red")] {
            let tr = kb.intern_triple(h, r, t).unwrap();
            kb.add_triple(tr, Source::Imported, 0).unwrap();
        }
        let config = EngineConfig {
            train: TrainConfig { dim: 8, blocks: 2, max_epochs: 5, ..Default::default() },
            condition: Condition::Quota { n },
            ..Default::default()
        };
        Engine::new(kb, TemplateRegistry::default(), config).unwrap()
    }

    #[test]
    fn quota_training_waits_for_open_questions() {
        let mut e = engine(1);
        let out = e.detect("banana").unwrap();
        assert!(out.accepted);
        assert_eq!(out.action, Action::StartTraining);
        assert_eq!(out.questions.len(), 2);
        assert!(e.training_due());
        assert_eq!(e.scheduler().mode, SchedulerMode::Training);
        assert!(!e.detect("pear").unwrap().accepted);
        let first = out.questions[0].id;
        e.answer(&Verdict::yes(first)).unwrap();
        assert!(e.training_due());
        e.discard(out.questions[1].id).unwrap();
        assert!(!e.training_due());
        assert_eq!(e.sessions().len(), 1);
        assert_eq!(e.scheduler().mode, SchedulerMode::Exploring);
        assert_eq!(e.scheduler().violations(), 0);
    }

    #[test]
    fn revision_increases_with_every_mutation() {
        let mut e = engine(5);
        let r0 = e.revision();
        let out = e.detect("banana").unwrap();
        let r1 = e.revision();
        assert!(r1 > r0);
        e.answer(&Verdict::no(out.questions[0].id, "kitchen")).unwrap();
        assert!(e.revision() > r1);
        assert_eq!(e.triples_about("banana").len(), 1);
    }

    #[test]
    fn explicit_training_outside_training_mode_is_refused() {
        let mut e = engine(5);
        assert!(matches!(e.train_now(), Err(EngineError::NotTraining(_))));
        assert_eq!(e.scheduler().violations(), 1);
    }

    #[test]
    fn resumed_engine_trains_only_new_triples_with_replay() {
        let mut e = engine(1);
        let out = e.detect("banana").unwrap();
        for q in &out.questions {
            e.answer(&Verdict::yes(q.id)).unwrap();
        }
        assert_eq!(e.sessions().len(), 1);
        let (kb, model, config) = (e.kb().clone(), e.model().clone(), e.config().clone());
        let mut resumed = Engine::with_model(kb, model, TemplateRegistry::default(), config).unwrap();
        assert_eq!(resumed.status().untrained_triples, 0);
        let out = resumed.detect("pear").unwrap();
        resumed.answer(&Verdict::no(out.questions[0].id, "kitchen")).unwrap();
        resumed.discard(out.questions[1].id).unwrap();
        let record = &resumed.sessions()[0];
        assert_eq!((record.session, record.trained_triples), (1, 1));
        assert!(record.replayed > 0);
    }
}
