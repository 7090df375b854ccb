use rand::Rng;

use super::TrainError;
use crate::kb::{EntityId, Triple, TripleSet};

/// Attempts per negative before a colliding corruption is kept anyway.
pub const MAX_RESAMPLE: usize = 100;

/// Draws `count` corruptions of `positive`, each labelled -1 by the caller.
///
/// Each negative replaces the head or the tail (probability 1/2 each) with
/// a uniformly drawn *different* entity, so it differs from the positive in
/// exactly one slot. Corruptions that are known positives are redrawn up to
/// [`MAX_RESAMPLE`] times; after that the last draw is kept.
pub fn sample_negatives<K: TripleSet + ?Sized, R: Rng + ?Sized>(
    positive: &Triple,
    num_entities: usize,
    known: &K,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Triple>, TrainError> {
    if num_entities < 2 {
        return Err(TrainError::Sampling(format!("need at least 2 entities to corrupt a triple, have {num_entities}")));
    }
    if count == 0 {
        return Err(TrainError::Config("negatives per positive must be >= 1".into()));
    }
    let n = num_entities as u32;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let corrupt_head = rng.gen_bool(0.5);
        let original = if corrupt_head { positive.head } else { positive.tail };
        let mut candidate = *positive;
        for _ in 0..MAX_RESAMPLE {
            // uniform over the n - 1 entities other than the original
            let mut e = rng.gen_range(0..n - 1);
            if e >= original.0 {
                e += 1;
            }
            candidate = if corrupt_head { positive.with_head(EntityId(e)) } else { positive.with_tail(EntityId(e)) };
            if !known.contains(&candidate) {
                break;
            }
        }
        out.push(candidate);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::RelationId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn tr(h: u32, t: u32) -> Triple {
        Triple::new(EntityId(h), RelationId(0), EntityId(t))
    }

    #[test]
    fn each_negative_differs_in_one_slot() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let known: HashSet<Triple> = [tr(2, 3)].into_iter().collect();
        let pos = tr(2, 3);
        for _ in 0..50 {
            let negs = sample_negatives(&pos, 10, &known, 6, &mut rng).unwrap();
            assert_eq!(negs.len(), 6);
            for n in negs {
                let diff = (n.head != pos.head) as u8 + (n.tail != pos.tail) as u8;
                assert_eq!(diff, 1);
                assert_eq!(n.relation, pos.relation);
                assert!(!known.contains(&n));
            }
        }
    }

    #[test]
    fn saturated_world_still_returns_negatives() {
        let known: HashSet<Triple> = [tr(0, 0), tr(0, 1), tr(1, 0), tr(1, 1)].into_iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let negs = sample_negatives(&tr(0, 1), 2, &known, 6, &mut rng).unwrap();
        assert_eq!(negs.len(), 6);
        assert!(negs.iter().all(|n| known.contains(n)));
    }

    #[test]
    fn head_corruption_frequency_is_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let known: HashSet<Triple> = HashSet::new();
        let pos = tr(4, 7);
        let negs = sample_negatives(&pos, 50, &known, 10_000, &mut rng).unwrap();
        let heads = negs.iter().filter(|n| n.head != pos.head).count() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&heads), "{heads}");
    }

    #[test]
    fn deterministic_under_seed() {
        let known: HashSet<Triple> = HashSet::new();
        let a = sample_negatives(&tr(1, 2), 30, &known, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = sample_negatives(&tr(1, 2), 30, &known, 20, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_vocabulary_is_an_error() {
        let known: HashSet<Triple> = HashSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_negatives(&tr(0, 0), 1, &known, 6, &mut rng), Err(TrainError::Sampling(_))));
    }
}
