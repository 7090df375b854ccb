//! Long-run simulation: a synthetic household world, the benchmark
//! sessions carved from it, the explore/train scheduler, and a driver that
//! runs the acquisition loop against a simulated teacher.

mod benchmark;
mod manifest;
mod scheduler;
mod sessions;
mod world;

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use benchmark::{
    benchmark_sessions, benchmark_train_config, benchmark_world_spec, BENCHMARK_NOVEL_FRACTION, BENCHMARK_SESSIONS, BENCHMARK_SPLIT_SEED,
    BENCHMARK_TRAIN_SEED,
};
pub use manifest::{load_sessions, toml_message, write_sessions, Manifest, SessionEntry, MANIFEST_FILE};
pub use scheduler::{Action, Condition, Event, SchedulerError, SchedulerMode, SchedulerState, FULL_BATTERY, MINUTES_PER_DAY};
pub use sessions::{chronological, final_session_overlap, make_sessions, DEV_FRACTION, TEST_FRACTION};
pub use world::{generate_world, World, WorldSpec, CAN_CONTAIN, HAS_COLOR, HAS_MATERIAL, NEAR_TO, OBJ_IN_LOC, RELATIONS};

use crate::acquisition::{SimulatedOracle, TemplateRegistry};
use crate::engine::{Engine, EngineConfig, EngineError, SessionRecord};
use crate::kb::{KbError, KnowledgeBase, NamedTriple, Source};
use crate::model::KgeModel;
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum LongrunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Manifest { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no training session completed within {0} ticks")]
    Stalled(u64),
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LongrunConfig {
    pub engine: EngineConfig,
    /// Share of the world the robot knows before the run starts.
    pub prior_fraction: f64,
    /// Share of the world withheld from the teacher and used for evaluation.
    pub heldout_fraction: f64,
    pub detections_per_tick: usize,
    /// Upper bound on simulated minutes spent waiting for one cycle.
    pub max_ticks_per_cycle: u64,
    pub seed: u64,
}

impl Default for LongrunConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig {
                train: TrainConfig { replay_fraction: 1.0, ..TrainConfig::default() },
                ..EngineConfig::default()
            },
            prior_fraction: 0.25,
            heldout_fraction: 0.15,
            detections_per_tick: 1,
            max_ticks_per_cycle: 10 * MINUTES_PER_DAY,
            seed: 0,
        }
    }
}

impl LongrunConfig {
    pub fn validate(&self) -> Result<(), LongrunError> {
        for (name, v) in [("prior fraction", self.prior_fraction), ("held-out fraction", self.heldout_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(LongrunError::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.detections_per_tick == 0 || self.max_ticks_per_cycle == 0 {
            return Err(LongrunError::Config("detections per tick and the tick budget must be positive".into()));
        }
        Ok(())
    }
}

/// Per-cycle measurements, one per completed training session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleMetrics {
    pub cycle: usize,
    pub clock: u64,
    pub kb_triples: usize,
    pub committed: usize,
    pub unsound: usize,
    pub discarded: usize,
    pub session: Option<SessionRecord>,
}

#[derive(Debug)]
pub struct LongrunOutcome {
    pub kb: KnowledgeBase,
    pub model: KgeModel,
    pub timeline: Vec<CycleMetrics>,
    /// Every triple committed through dialogue, in order.
    pub acquired: Vec<NamedTriple>,
    pub heldout: Vec<NamedTriple>,
    /// Training steps that ran while the scheduler was not training.
    pub violations: usize,
}

impl LongrunOutcome {
    pub fn heldout_hits_at_10(&self) -> Vec<f64> {
        self.timeline.iter().map(|c| c.session.as_ref().and_then(|s| s.heldout).map_or(0.0, |m| m.hits_at_10)).collect()
    }

    /// `cycle,metric,value` rows.
    pub fn timeline_csv(&self) -> String {
        timeline_csv(&self.timeline)
    }
}

pub fn timeline_csv(timeline: &[CycleMetrics]) -> String {
    let mut out = String::from("cycle,metric,value\n");
    for c in timeline {
        let mut row = |metric: &str, value: String| {
            let _ = writeln!(out, "{},{metric},{value}", c.cycle);
        };
        row("clock", c.clock.to_string());
        row("kb_triples", c.kb_triples.to_string());
        row("committed", c.committed.to_string());
        row("unsound", c.unsound.to_string());
        row("discarded", c.discarded.to_string());
        if let Some(s) = &c.session {
            row("trained_triples", s.trained_triples.to_string());
            row("best_epoch", s.best_epoch.to_string());
            row("stopped_epoch", s.stopped_epoch.to_string());
            if let Some(m) = s.heldout {
                row("heldout_mrr", format!("{:.6}", m.mrr));
                row("heldout_hits_at_10", format!("{:.6}", m.hits_at_10));
            }
        }
    }
    out
}

/// Splits the world into what the robot starts with, what is withheld for
/// evaluation and what is left to discover. Withheld triples only use
/// entities from the starting vocabulary.
fn partition_world(world: &World, config: &LongrunConfig, rng: &mut ChaCha8Rng) -> (Vec<NamedTriple>, Vec<NamedTriple>) {
    let mut all = world.named_triples();
    all.shuffle(rng);
    let n_prior = (all.len() as f64 * config.prior_fraction).round() as usize;
    let rest = all.split_off(n_prior);
    let prior = all;
    let known: HashSet<&str> = prior.iter().flat_map(|t| [t.head.as_str(), t.tail.as_str()]).collect();
    let budget = (rest.len() as f64 * config.heldout_fraction).round() as usize;
    let heldout: Vec<NamedTriple> =
        rest.into_iter().filter(|t| known.contains(t.head.as_str()) && known.contains(t.tail.as_str())).take(budget).collect();
    (prior, heldout)
}

/// Runs the explore/train loop for `cycles` training sessions.
///
/// Each tick the robot detects world objects (without replacement until
/// every object has been seen, then with replacement), asks its questions
/// and commits the teacher's answers. The scheduler decides when to train;
/// training covers everything acquired since the previous session.
pub fn run_longrun(world: &World, config: &LongrunConfig, cycles: usize) -> Result<LongrunOutcome, LongrunError> {
    config.validate()?;
    if cycles == 0 {
        return Err(LongrunError::Config("cycles must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (prior, heldout) = partition_world(world, config, &mut rng);
    let truth = world.named_triples();
    let truth_set: HashSet<&NamedTriple> = truth.iter().collect();
    let mut oracle = SimulatedOracle::with_withheld(truth.iter().cloned(), heldout.iter().cloned(), rng.gen());

    let mut kb = KnowledgeBase::new();
    for rel in RELATIONS {
        kb.register_relation(rel)?;
    }
    kb.import_named(&prior, 0)?;
    let mut engine_config = config.engine.clone();
    engine_config.seed = config.seed;
    let mut engine = Engine::new(kb, TemplateRegistry::default(), engine_config)?;
    engine.set_evaluation(heldout.clone(), truth.clone());

    let mut unseen = world.objects();
    unseen.shuffle(&mut rng);
    unseen.reverse();
    let objects = world.objects();

    let mut timeline = Vec::with_capacity(cycles);
    let mut acquired = Vec::new();
    let (mut unsound, mut discarded) = (0usize, 0usize);
    let mut ticks_this_cycle = 0u64;
    while engine.sessions().len() < cycles || engine.training_due() {
        let before = engine.sessions().len();
        engine.tick()?;
        ticks_this_cycle += 1;
        if ticks_this_cycle > config.max_ticks_per_cycle {
            return Err(LongrunError::Stalled(config.max_ticks_per_cycle));
        }
        for _ in 0..config.detections_per_tick {
            if engine.scheduler().mode != SchedulerMode::Exploring {
                break;
            }
            let label = unseen.pop().unwrap_or_else(|| objects[rng.gen_range(0..objects.len())].clone());
            let outcome = engine.detect(&label)?;
            for q in outcome.questions {
                match oracle.answer(&q) {
                    Some(verdict) => {
                        let ack = engine.answer(&verdict)?;
                        if ack.new {
                            if !truth_set.contains(&ack.committed) {
                                unsound += 1;
                            }
                            acquired.push(ack.committed);
                        }
                    }
                    None => {
                        engine.discard(q.id)?;
                        discarded += 1;
                    }
                }
            }
        }
        if engine.sessions().len() > before {
            ticks_this_cycle = 0;
            timeline.push(CycleMetrics {
                cycle: timeline.len() + 1,
                clock: engine.scheduler().clock,
                kb_triples: engine.kb().len(),
                committed: acquired.len(),
                unsound,
                discarded,
                session: engine.sessions().last().cloned(),
            });
            if timeline.len() == cycles {
                break;
            }
        }
    }

    let violations = engine.scheduler().violations();
    let kb = engine.kb().clone();
    let model = engine.model().clone();
    Ok(LongrunOutcome { kb, model, timeline, acquired, heldout, violations })
}

/// Adds world triples to `kb` as imports, for building a teacher-side KB.
pub fn import_world(kb: &mut KnowledgeBase, world: &World) -> Result<usize, KbError> {
    let named = world.named_triples();
    let before = kb.len();
    for n in &named {
        let t = kb.intern_triple(&n.head, &n.relation, &n.tail)?;
        kb.add_triple(t, Source::Imported, 0)?;
    }
    Ok(kb.len() - before)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(n: usize) -> LongrunConfig {
        let mut c = LongrunConfig::default();
        c.engine.condition = Condition::Quota { n };
        c.engine.train = TrainConfig { dim: 8, blocks: 2, max_epochs: 20, patience: 5, replay_fraction: 1.0, ..Default::default() };
        c
    }

    #[test]
    fn one_cycle_with_quota_five() {
        let world = generate_world(&WorldSpec::default()).unwrap();
        let out = run_longrun(&world, &quick(5), 1).unwrap();
        assert_eq!(out.timeline.len(), 1);
        assert!(out.kb.len() >= 5);
        assert_eq!(out.violations, 0);
        let truth: HashSet<_> = world.named_triples().into_iter().collect();
        assert!(out.acquired.iter().all(|t| truth.contains(t)));
        assert!(out.heldout.iter().all(|t| !out.acquired.contains(t)));
    }

    #[test]
    fn battery_and_day_night_complete_cycles() {
        let world = generate_world(&WorldSpec::default()).unwrap();
        let mut c = quick(5);
        c.engine.condition = Condition::Battery { threshold: 20.0, drain: 2.0, charge: 10.0 };
        let out = run_longrun(&world, &c, 2).unwrap();
        assert_eq!(out.timeline.len(), 2);
        c.engine.condition = Condition::DayNight { day_start: 8 * 60, night_start: 20 * 60 };
        let out = run_longrun(&world, &c, 2).unwrap();
        assert_eq!(out.timeline.len(), 2);
        assert_eq!(out.violations, 0);
        let csv = out.timeline_csv();
        assert!(csv.starts_with("cycle,metric,value\n1,clock,"));
    }
}
