use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::world::World;
use super::LongrunError;
use crate::kb::{EntityId, KbError, Triple, Vocabulary};
use crate::train::SessionDataset;

pub const DEV_FRACTION: f64 = 0.1;
pub const TEST_FRACTION: f64 = 0.1;

/// 80/10/10 split in which every dev and test triple only mentions
/// entities that still occur in the training split.
fn split(index: usize, mut triples: Vec<Triple>, rng: &mut ChaCha8Rng) -> SessionDataset {
    triples.shuffle(rng);
    let n = triples.len();
    let n_dev = if n >= 2 { ((n as f64 * DEV_FRACTION).round() as usize).max(1) } else { 0 };
    let n_test = if n >= 3 { (n as f64 * TEST_FRACTION).round() as usize } else { 0 };
    let mut degree: HashMap<EntityId, usize> = HashMap::new();
    for t in &triples {
        *degree.entry(t.head).or_default() += 1;
        *degree.entry(t.tail).or_default() += 1;
    }
    let (mut dev, mut test, mut train) = (Vec::new(), Vec::new(), Vec::new());
    for t in triples {
        let wanted = dev.len() < n_dev || test.len() < n_test;
        let removable = if t.head == t.tail { degree[&t.head] > 2 } else { degree[&t.head] > 1 && degree[&t.tail] > 1 };
        if wanted && removable {
            *degree.get_mut(&t.head).expect("counted") -= 1;
            *degree.get_mut(&t.tail).expect("counted") -= 1;
            if dev.len() < n_dev {
                dev.push(t);
            } else {
                test.push(t);
            }
        } else {
            train.push(t);
        }
    }
    SessionDataset { index, train, dev, test }
}

/// Number of shared-pool triples mixed into the final session so that
/// strictly more than `fraction` of it is novel.
fn old_share(novel: usize, fraction: f64) -> usize {
    if fraction >= 1.0 {
        return 0;
    }
    let bound = novel as f64 * (1.0 - fraction) / fraction;
    (bound.ceil() as usize).saturating_sub(1)
}

/// Groups triples by head entity and deals the heads round-robin over
/// `sessions` buckets in a seeded order.
fn deal_by_head(triples: Vec<Triple>, sessions: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Triple>> {
    let mut by_head: BTreeMap<EntityId, Vec<Triple>> = BTreeMap::new();
    for t in triples {
        by_head.entry(t.head).or_default().push(t);
    }
    let mut groups: Vec<Vec<Triple>> = by_head.into_values().collect();
    groups.shuffle(rng);
    let mut buckets = vec![Vec::new(); sessions];
    for (i, g) in groups.into_iter().enumerate() {
        buckets[i % sessions].extend(g);
    }
    buckets
}

/// Partitions the world into `count` sessions, each split 80/10/10.
///
/// All facts about one object (one head entity) land in the same session,
/// so sessions `0..count-1` differ in their objects while sharing rooms,
/// materials and colors. With a positive `novel_fraction` the final session
/// holds every novel-context triple plus a few main-context ones, so more
/// than `novel_fraction` of it involves only entities no earlier session
/// has seen. With `novel_fraction == 0`, or a world without a novel
/// context, all sessions draw from one pool.
pub fn make_sessions(world: &World, count: usize, novel_fraction: f64, seed: u64) -> Result<Vec<SessionDataset>, LongrunError> {
    if count < 2 {
        return Err(LongrunError::Config(format!("need at least 2 sessions, got {count}")));
    }
    if !(0.0..=1.0).contains(&novel_fraction) {
        return Err(LongrunError::Config(format!("novel fraction must lie in [0, 1], got {novel_fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (novel, mut shared): (Vec<Triple>, Vec<Triple>) = world.triples().into_iter().partition(|t| world.is_novel(t.head));

    let buckets = if novel_fraction == 0.0 || novel.is_empty() {
        shared.extend(novel);
        deal_by_head(shared, count, &mut rng)
    } else {
        let mut buckets = deal_by_head(shared, count - 1, &mut rng);
        let k = old_share(novel.len(), novel_fraction);
        let mut last = novel;
        // take the old triples evenly from the shared sessions
        for i in 0..k {
            let b = &mut buckets[i % (count - 1)];
            if b.len() > 1 {
                let pick = rand::Rng::gen_range(&mut rng, 0..b.len());
                last.push(b.swap_remove(pick));
            }
        }
        buckets.push(last);
        buckets
    };
    for (i, b) in buckets.iter().enumerate() {
        if b.is_empty() {
            return Err(LongrunError::Config(format!("world too small: session {i} received no triples")));
        }
    }
    Ok(buckets.into_iter().enumerate().map(|(i, b)| split(i, b, &mut rng)).collect())
}

/// Re-interns session triples so that entity ids follow first appearance
/// (session by session, train before dev before test). A model grown to
/// the largest id of sessions `0..=k` then holds exactly the entities seen
/// so far. Relations keep their order from `vocab`.
pub fn chronological(vocab: &Vocabulary, sessions: &[SessionDataset]) -> Result<(Vocabulary, Vec<SessionDataset>), KbError> {
    let mut fresh = Vocabulary::default();
    for r in vocab.relation_ids() {
        fresh.register_relation(vocab.relation_name(r).ok_or(KbError::Corrupt("unknown relation id".into()))?)?;
    }
    let mut remap = |ts: &[Triple]| -> Result<Vec<Triple>, KbError> {
        ts.iter()
            .map(|t| {
                let name = |e| vocab.entity_name(e).ok_or_else(|| KbError::Corrupt(format!("unknown entity id {}", e.0)));
                let h = fresh.register_entity(name(t.head)?)?;
                let tl = fresh.register_entity(name(t.tail)?)?;
                Ok(Triple::new(h, t.relation, tl))
            })
            .collect()
    };
    let mut out = Vec::with_capacity(sessions.len());
    for s in sessions {
        out.push(SessionDataset { index: s.index, train: remap(&s.train)?, dev: remap(&s.dev)?, test: remap(&s.test)? });
    }
    Ok((fresh, out))
}

/// Fraction of the final session's triples that mention an entity already
/// seen in an earlier session.
pub fn final_session_overlap(sessions: &[SessionDataset]) -> f64 {
    let Some((last, earlier)) = sessions.split_last() else { return 0.0 };
    let seen: HashSet<EntityId> = earlier.iter().flat_map(|s| s.all()).flat_map(|t| [t.head, t.tail]).collect();
    let total = last.len();
    if total == 0 {
        return 0.0;
    }
    last.all().filter(|t| seen.contains(&t.head) || seen.contains(&t.tail)).count() as f64 / total as f64
}
