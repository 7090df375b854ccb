//! Continual-learning strategies. A strategy decides what, besides the
//! current session's training triples, goes into each epoch.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{SessionDataset, TrainError};
use crate::kb::Triple;

pub trait ContinualStrategy: Send + Sync {
    /// Extra positives mixed into one epoch of session `session`, whose
    /// training split holds `train_len` triples.
    fn rehearsal(&self, session: usize, train_len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Triple>, TrainError>;

    /// Past positives that negative sampling must not produce.
    fn remembered(&self) -> &[Triple];

    /// Called once a session has finished training.
    fn end_session(&mut self, dataset: &SessionDataset);

    /// Number of past triples handed out so far.
    fn reads(&self) -> usize;
}

/// Plain sequential training: nothing from earlier sessions is ever read.
#[derive(Debug, Default)]
pub struct NoRehearsal;

impl ContinualStrategy for NoRehearsal {
    fn rehearsal(&self, _: usize, _: usize, _: &mut ChaCha8Rng) -> Result<Vec<Triple>, TrainError> {
        Ok(Vec::new())
    }

    fn remembered(&self) -> &[Triple] {
        &[]
    }

    fn end_session(&mut self, _: &SessionDataset) {}

    fn reads(&self) -> usize {
        0
    }
}

/// Uniform rehearsal: each epoch replays `ceil(fraction * |train|)` triples
/// drawn with replacement from the training splits of earlier sessions.
#[derive(Debug)]
pub struct ReplayPool {
    fraction: f64,
    triples: Vec<Triple>,
    origins: Vec<usize>,
    reads: AtomicUsize,
}

impl ReplayPool {
    pub fn new(fraction: f64) -> Result<Self, TrainError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(TrainError::Config(format!("replay fraction must lie in [0, 1], got {fraction}")));
        }
        Ok(Self { fraction, triples: Vec::new(), origins: Vec::new(), reads: AtomicUsize::new(0) })
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn push(&mut self, session: usize, triples: &[Triple]) {
        self.triples.extend_from_slice(triples);
        self.origins.extend(std::iter::repeat_n(session, triples.len()));
    }

    /// Latest session that contributed to the pool.
    pub fn newest_origin(&self) -> Option<usize> {
        self.origins.iter().copied().max()
    }
}

impl ContinualStrategy for ReplayPool {
    fn rehearsal(&self, session: usize, train_len: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Triple>, TrainError> {
        if self.triples.is_empty() || self.fraction == 0.0 {
            return Ok(Vec::new());
        }
        if let Some(newest) = self.newest_origin() {
            if newest >= session {
                return Err(TrainError::Config(format!(
                    "replay pool holds triples from session {newest}, cannot rehearse them in session {session}"
                )));
            }
        }
        let k = (self.fraction * train_len as f64).ceil() as usize;
        self.reads.fetch_add(k, Ordering::Relaxed);
        Ok((0..k).map(|_| self.triples[rng.gen_range(0..self.triples.len())]).collect())
    }

    fn remembered(&self) -> &[Triple] {
        &self.triples
    }

    fn end_session(&mut self, dataset: &SessionDataset) {
        self.push(dataset.index, &dataset.train);
    }

    fn reads(&self) -> usize {
        self.reads.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{EntityId, RelationId};
    use rand::SeedableRng;

    fn tr(i: u32) -> Triple {
        Triple::new(EntityId(i), RelationId(0), EntityId(i + 1))
    }

    #[test]
    fn replay_size_is_ceiling_of_fraction() {
        let mut pool = ReplayPool::new(0.3).unwrap();
        pool.push(0, &[tr(0), tr(1), tr(2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(pool.rehearsal(1, 10, &mut rng).unwrap().len(), 3);
        assert_eq!(pool.rehearsal(1, 11, &mut rng).unwrap().len(), 4);
        assert_eq!(pool.reads(), 7);
    }

    #[test]
    fn replay_only_from_earlier_sessions() {
        let mut pool = ReplayPool::new(0.5).unwrap();
        pool.push(2, &[tr(0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(pool.rehearsal(2, 4, &mut rng).is_err());
        assert!(pool.rehearsal(3, 4, &mut rng).is_ok());
    }

    #[test]
    fn empty_pool_and_classical_read_nothing() {
        let pool = ReplayPool::new(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(pool.rehearsal(0, 100, &mut rng).unwrap().is_empty());
        assert_eq!(pool.reads(), 0);
        assert!(NoRehearsal.rehearsal(4, 100, &mut rng).unwrap().is_empty());
        assert!(ReplayPool::new(1.5).is_err());
    }
}
