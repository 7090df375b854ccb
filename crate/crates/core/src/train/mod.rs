//! Session training: negative sampling, mini-batch Adagrad on the logistic
//! loss, dev-MRR early stopping, and the multi-session curriculum in
//! classical (sequential) or continual (replay) mode.

mod curriculum;
mod negative;
mod replay;

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use curriculum::{run_curriculum, CurriculumOutcome, Mode};
pub use negative::{sample_negatives, MAX_RESAMPLE};
pub use replay::{ContinualStrategy, NoRehearsal, ReplayPool};

use crate::eval::{evaluate_split, EvalError, Protocol};
use crate::kb::{Triple, TripleSet};
use crate::model::{KgeModel, ModelError, ModelShape};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("session {0} has an empty training split")]
    EmptyTrain(usize),
    #[error("negative sampling: {0}")]
    Sampling(String),
    #[error("invalid session dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub blocks: usize,
    pub learning_rate: f32,
    pub negatives: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub replay_fraction: f64,
    pub reg: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            blocks: 8,
            learning_rate: 0.1,
            negatives: 6,
            batch_size: 512,
            max_epochs: 500,
            patience: 50,
            replay_fraction: 0.3,
            reg: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.shape()?;
        let positive = [
            ("learning rate", self.learning_rate > 0.0),
            ("negatives per positive", self.negatives >= 1),
            ("batch size", self.batch_size >= 1),
            ("max epochs", self.max_epochs >= 1),
            ("patience", self.patience >= 1),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, ok)| !ok) {
            return Err(TrainError::Config(format!("{name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.replay_fraction) {
            return Err(TrainError::Config(format!("replay fraction must lie in [0, 1], got {}", self.replay_fraction)));
        }
        if self.reg.is_nan() || self.reg < 0.0 {
            return Err(TrainError::Config(format!("regularisation weight must be >= 0, got {}", self.reg)));
        }
        Ok(())
    }

    pub fn shape(&self) -> Result<ModelShape, TrainError> {
        Ok(ModelShape::new(self.dim, self.blocks)?)
    }
}

/// Train/dev/test triples of one learning session.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionDataset {
    pub index: usize,
    pub train: Vec<Triple>,
    pub dev: Vec<Triple>,
    pub test: Vec<Triple>,
}

impl SessionDataset {
    pub fn all(&self) -> impl Iterator<Item = &Triple> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Splits must be pairwise disjoint.
    pub fn validate(&self) -> Result<(), TrainError> {
        let mut seen = HashSet::new();
        for t in self.all() {
            if !seen.insert(*t) {
                return Err(TrainError::Dataset(format!("session {}: triple {t} appears in more than one split", self.index)));
            }
        }
        Ok(())
    }

    pub fn max_ids(&self) -> (usize, usize) {
        self.all().fold((0, 0), |(e, r), t| {
            (e.max(t.head.index() + 1).max(t.tail.index() + 1), r.max(t.relation.index() + 1))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    /// 0 is the untrained starting point.
    pub epoch: usize,
    pub loss: f64,
    pub dev_mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub session: usize,
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    /// Triples drawn from earlier sessions during this session.
    pub replayed: usize,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.epochs[0].loss
    }

    pub fn best(&self) -> &EpochStats {
        &self.epochs[self.best_epoch]
    }

    /// `epoch,loss,dev_mrr`, starting with the untrained epoch 0.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,dev_mrr\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:.6},{:.6}", e.epoch, e.loss, e.dev_mrr);
        }
        out
    }
}

/// Row-sparse gradient accumulator shaped like one parameter matrix.
struct SparseGrad {
    dim: usize,
    data: Vec<f32>,
    touched: Vec<u32>,
    marked: Vec<bool>,
}

impl SparseGrad {
    fn new(rows: usize, dim: usize) -> Self {
        Self { dim, data: vec![0.0; rows * dim], touched: Vec::new(), marked: vec![false; rows] }
    }

    fn add(&mut self, row: u32, grad: &[f32]) {
        let r = row as usize;
        if !self.marked[r] {
            self.marked[r] = true;
            self.touched.push(row);
        }
        for (acc, g) in self.data[r * self.dim..(r + 1) * self.dim].iter_mut().zip(grad) {
            *acc += g;
        }
    }

    /// Touched rows in ascending order with their gradients; clears the accumulator.
    fn drain(&mut self, mut apply: impl FnMut(u32, &mut [f32])) {
        self.touched.sort_unstable();
        for &row in &self.touched {
            let r = row as usize;
            let slice = &mut self.data[r * self.dim..(r + 1) * self.dim];
            apply(row, slice);
            slice.iter_mut().for_each(|x| *x = 0.0);
            self.marked[r] = false;
        }
        self.touched.clear();
    }
}

struct FilterSet<'a> {
    session: HashSet<Triple>,
    remembered: &'a [Triple],
    remembered_set: HashSet<Triple>,
}

impl<'a> FilterSet<'a> {
    fn new(session: impl Iterator<Item = Triple>, remembered: &'a [Triple]) -> Self {
        Self { session: session.collect(), remembered, remembered_set: remembered.iter().copied().collect() }
    }
}

impl TripleSet for FilterSet<'_> {
    fn contains(&self, t: &Triple) -> bool {
        self.session.contains(t) || (!self.remembered.is_empty() && self.remembered_set.contains(t))
    }
}

fn session_rng(seed: u64, session: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (session as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// Mean logistic loss of positives and sampled negatives, without updates.
fn measure_loss<K: TripleSet>(
    model: &KgeModel,
    train: &[Triple],
    known: &K,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<f64, TrainError> {
    let n = model.num_entities();
    let mut total = 0.0;
    let mut count = 0usize;
    for pos in train {
        total += model.params.loss_and_gradients(pos, 1.0)?.loss as f64;
        for neg in sample_negatives(pos, n, known, config.negatives, rng)? {
            total += model.params.loss_and_gradients(&neg, -1.0)?.loss as f64;
        }
        count += 1 + config.negatives;
    }
    Ok(total / count as f64)
}

/// One pass of mini-batch updates over `examples`. Returns the mean loss
/// observed during the pass.
fn run_epoch<K: TripleSet>(
    model: &mut KgeModel,
    examples: &[Triple],
    known: &K,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    ent_grad: &mut SparseGrad,
    rel_grad: &mut SparseGrad,
) -> Result<f64, TrainError> {
    let n = model.num_entities();
    let mut total = 0.0;
    let mut count = 0usize;
    for batch in examples.chunks(config.batch_size) {
        for pos in batch {
            let negs = sample_negatives(pos, n, known, config.negatives, rng)?;
            let labelled = std::iter::once((*pos, 1.0)).chain(negs.into_iter().map(|t| (t, -1.0)));
            for (triple, label) in labelled {
                let g = model.params.loss_and_gradients(&triple, label)?;
                total += g.loss as f64;
                count += 1;
                ent_grad.add(triple.head.0, &g.head);
                ent_grad.add(triple.tail.0, &g.tail);
                rel_grad.add(triple.relation.0, &g.relation);
            }
        }
        let reg = config.reg;
        let KgeModel { params, optimizer } = model;
        ent_grad.drain(|row, grad| {
            let id = crate::kb::EntityId(row);
            let p = params.entity_mut(id);
            grad.iter_mut().zip(p.iter()).for_each(|(g, &x)| *g += reg * x);
            optimizer.update_entity(row as usize, p, grad);
        });
        rel_grad.drain(|row, grad| {
            let id = crate::kb::RelationId(row);
            let p = params.relation_mut(id);
            grad.iter_mut().zip(p.iter()).for_each(|(g, &x)| *g += reg * x);
            optimizer.update_relation(row as usize, p, grad);
        });
    }
    Ok(total / count.max(1) as f64)
}

/// Trains `model` on one session and returns the model from the epoch with
/// the best dev MRR (epoch 0, the untouched input, included).
///
/// Each epoch is a seeded shuffle of the training split plus whatever the
/// strategy rehearses. Training stops once dev MRR has not improved for
/// `patience` epochs, or after `max_epochs`. If the dev split is empty the
/// training split is monitored instead.
pub fn train_session(
    model: &KgeModel,
    dataset: &SessionDataset,
    strategy: &dyn ContinualStrategy,
    config: &TrainConfig,
) -> Result<(KgeModel, TrainReport), TrainError> {
    config.validate()?;
    if dataset.train.is_empty() {
        return Err(TrainError::EmptyTrain(dataset.index));
    }
    dataset.validate()?;
    for t in dataset.all() {
        model.params.check_triple(t)?;
    }
    let mut model = model.clone();
    model.optimizer.learning_rate = config.learning_rate;

    let remembered = strategy.remembered();
    // Dev and test triples are known facts of the session's KB. Leaving them
    // out of the filter would train them as negatives.
    let known = FilterSet::new(dataset.all().copied(), remembered);
    let monitor: &[Triple] = if dataset.dev.is_empty() { &dataset.train } else { &dataset.dev };

    let mut rng = session_rng(config.seed, dataset.index, 0);
    let mut probe_rng = session_rng(config.seed, dataset.index, 1);
    let reads_before = strategy.reads();

    let dev_mrr = |m: &KgeModel| -> Result<f64, TrainError> {
        Ok(evaluate_split(&m.params, monitor, &known, Protocol::Filtered)?.mrr)
    };

    let mut epochs = vec![EpochStats {
        epoch: 0,
        loss: measure_loss(&model, &dataset.train, &known, config, &mut probe_rng)?,
        dev_mrr: dev_mrr(&model)?,
    }];
    let mut best_epoch = 0;
    let mut best_mrr = epochs[0].dev_mrr;
    let mut best_model = model.clone();

    let mut ent_grad = SparseGrad::new(model.num_entities(), model.params.dim());
    let mut rel_grad = SparseGrad::new(model.num_relations(), model.params.dim());
    let mut stopped = 0;
    for epoch in 1..=config.max_epochs {
        let mut examples = dataset.train.clone();
        examples.extend(strategy.rehearsal(dataset.index, dataset.train.len(), &mut rng)?);
        examples.shuffle(&mut rng);
        let loss = run_epoch(&mut model, &examples, &known, config, &mut rng, &mut ent_grad, &mut rel_grad)?;
        let mrr = dev_mrr(&model)?;
        epochs.push(EpochStats { epoch, loss, dev_mrr: mrr });
        stopped = epoch;
        if mrr > best_mrr {
            best_mrr = mrr;
            best_epoch = epoch;
            best_model = model.clone();
        }
        if epoch - best_epoch >= config.patience {
            break;
        }
    }

    let report = TrainReport {
        session: dataset.index,
        epochs,
        best_epoch,
        stopped_epoch: stopped,
        replayed: strategy.reads() - reads_before,
    };
    Ok((best_model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{EntityId, RelationId};

    fn toy_triples() -> Vec<Triple> {
        // 8 entities, 2 relations, 12 facts
        let raw = [
            (0, 0, 4), (1, 0, 4), (2, 0, 5), (3, 0, 5), (6, 0, 4), (7, 0, 5),
            (0, 1, 1), (1, 1, 0), (2, 1, 3), (3, 1, 2), (6, 1, 0), (7, 1, 2),
        ];
        raw.iter().map(|&(h, r, t)| Triple::new(EntityId(h), RelationId(r), EntityId(t))).collect()
    }

    fn toy_model(config: &TrainConfig) -> KgeModel {
        KgeModel::new(8, 2, config.shape().unwrap(), config.learning_rate, config.seed).unwrap()
    }

    #[test]
    fn one_epoch_stops_at_one() {
        let config = TrainConfig { max_epochs: 1, dim: 8, blocks: 2, ..Default::default() };
        let ds = SessionDataset { index: 0, train: toy_triples(), ..Default::default() };
        let (_, report) = train_session(&toy_model(&config), &ds, &NoRehearsal, &config).unwrap();
        assert_eq!(report.stopped_epoch, 1);
        assert_eq!(report.epochs.len(), 2);
    }

    #[test]
    fn toy_graph_loss_decreases() {
        let config = TrainConfig { max_epochs: 200, patience: 1000, dim: 8, blocks: 2, seed: 3, ..Default::default() };
        let ds = SessionDataset { index: 0, train: toy_triples(), ..Default::default() };
        let (_, report) = train_session(&toy_model(&config), &ds, &NoRehearsal, &config).unwrap();
        assert_eq!(report.stopped_epoch, 200);
        let last = report.epochs.last().unwrap().loss;
        assert!(last < report.initial_loss(), "{last} vs {}", report.initial_loss());
    }

    #[test]
    fn early_stopping_within_patience() {
        let config = TrainConfig { patience: 50, dim: 8, blocks: 2, seed: 5, ..Default::default() };
        let triples = toy_triples();
        let ds = SessionDataset { index: 0, train: triples.clone(), ..Default::default() };
        let (_, report) = train_session(&toy_model(&config), &ds, &NoRehearsal, &config).unwrap();
        assert!(report.stopped_epoch - report.best_epoch <= 50);
        assert!(report.stopped_epoch <= config.max_epochs);
        assert!(report.stopped_epoch < config.max_epochs, "toy set should saturate well before 500 epochs");
    }

    #[test]
    fn returns_best_epoch_model() {
        let config = TrainConfig { patience: 20, dim: 8, blocks: 2, seed: 9, ..Default::default() };
        let ds = SessionDataset { index: 0, train: toy_triples(), ..Default::default() };
        let (model, report) = train_session(&toy_model(&config), &ds, &NoRehearsal, &config).unwrap();
        let filter: HashSet<Triple> = ds.train.iter().copied().collect();
        let mrr = evaluate_split(&model.params, &ds.train, &filter, Protocol::Filtered).unwrap().mrr;
        assert_eq!(mrr, report.best().dev_mrr);
    }

    #[test]
    fn training_is_deterministic() {
        let config = TrainConfig { max_epochs: 30, dim: 8, blocks: 2, seed: 1, ..Default::default() };
        let ds = SessionDataset { index: 2, train: toy_triples(), ..Default::default() };
        let a = train_session(&toy_model(&config), &ds, &NoRehearsal, &config).unwrap();
        let b = train_session(&toy_model(&config), &ds, &NoRehearsal, &config).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn rejects_bad_input() {
        let config = TrainConfig { dim: 8, blocks: 2, ..Default::default() };
        let empty = SessionDataset::default();
        assert!(matches!(train_session(&toy_model(&config), &empty, &NoRehearsal, &config), Err(TrainError::EmptyTrain(0))));
        let t = toy_triples();
        let leaky = SessionDataset { index: 0, train: t.clone(), dev: vec![t[0]], test: vec![] };
        assert!(matches!(train_session(&toy_model(&config), &leaky, &NoRehearsal, &config), Err(TrainError::Dataset(_))));
        let out_of_range = SessionDataset { index: 0, train: vec![Triple::new(EntityId(20), RelationId(0), EntityId(0))], ..Default::default() };
        assert!(matches!(train_session(&toy_model(&config), &out_of_range, &NoRehearsal, &config), Err(TrainError::Model(_))));
        let bad = TrainConfig { replay_fraction: 2.0, ..config };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn report_csv_has_epoch_zero() {
        let config = TrainConfig { max_epochs: 3, patience: 10, dim: 8, blocks: 2, ..Default::default() };
        let ds = SessionDataset { index: 0, train: toy_triples(), ..Default::default() };
        let (_, report) = train_session(&toy_model(&config), &ds, &NoRehearsal, &config).unwrap();
        let csv = report.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "epoch,loss,dev_mrr");
        assert!(lines[1].starts_with("0,"));
        assert_eq!(lines.len(), 5);
    }
}
