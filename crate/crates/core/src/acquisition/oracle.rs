use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Question, Verdict};
use crate::kb::NamedTriple;

/// Answers questions from a ground-truth triple set, standing in for the
/// human teacher in automated runs.
///
/// Triples in the withheld set are treated as unknown to the teacher:
/// questions about them are discarded and they are never offered as
/// corrections. This keeps an evaluation slice out of the acquired KB.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    truth: HashSet<NamedTriple>,
    withheld: HashSet<NamedTriple>,
    tails: BTreeMap<(String, String), Vec<String>>,
    rng: ChaCha8Rng,
}

impl SimulatedOracle {
    pub fn new(truth: impl IntoIterator<Item = NamedTriple>, seed: u64) -> Self {
        Self::with_withheld(truth, std::iter::empty(), seed)
    }

    pub fn with_withheld(
        truth: impl IntoIterator<Item = NamedTriple>,
        withheld: impl IntoIterator<Item = NamedTriple>,
        seed: u64,
    ) -> Self {
        let truth: HashSet<NamedTriple> = truth.into_iter().collect();
        let withheld: HashSet<NamedTriple> = withheld.into_iter().collect();
        let mut tails: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
        for t in truth.iter().filter(|t| !withheld.contains(*t)) {
            tails.entry((t.head.clone(), t.relation.clone())).or_default().push(t.tail.clone());
        }
        // HashSet order is arbitrary; sort so sampling is reproducible
        tails.values_mut().for_each(|v| v.sort());
        Self { truth, withheld, tails, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn is_true(&self, triple: &NamedTriple) -> bool {
        self.truth.contains(triple)
    }

    /// `None` means the question is discarded: the teacher knows no answer.
    pub fn answer(&mut self, question: &Question) -> Option<Verdict> {
        let asked = &question.named;
        if self.withheld.contains(asked) {
            return None;
        }
        if self.truth.contains(asked) {
            return Some(Verdict::yes(question.id));
        }
        let options = self.tails.get(&(asked.head.clone(), asked.relation.clone()))?;
        let tail = options.choose(&mut self.rng)?;
        Some(Verdict::no(question.id, tail))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::QuestionState;
    use crate::kb::{EntityId, RelationId, Triple};

    fn question(id: u64, h: &str, r: &str, t: &str) -> Question {
        Question {
            id,
            triple: Triple::new(EntityId(0), RelationId(0), EntityId(1)),
            named: NamedTriple::new(h, r, t),
            text: String::new(),
            correction_prompt: String::new(),
            created_at: 0,
            state: QuestionState::Pending,
        }
    }

    fn truth() -> Vec<NamedTriple> {
        vec![
            NamedTriple::new("apple", "objInLoc", "kitchen"),
            NamedTriple::new("mug", "nearTo", "plate"),
            NamedTriple::new("mug", "nearTo", "kettle"),
        ]
    }

    #[test]
    fn true_triple_gets_yes() {
        let mut o = SimulatedOracle::new(truth(), 0);
        assert_eq!(o.answer(&question(3, "apple", "objInLoc", "kitchen")), Some(Verdict::yes(3)));
    }

    #[test]
    fn wrong_tail_gets_true_correction() {
        let mut o = SimulatedOracle::new(truth(), 0);
        let v = o.answer(&question(1, "apple", "objInLoc", "bedroom")).unwrap();
        assert_eq!(v, Verdict::no(1, "kitchen"));
        for _ in 0..20 {
            let v = o.answer(&question(2, "mug", "nearTo", "sofa")).unwrap();
            let c = v.correction.unwrap();
            assert!(c == "plate" || c == "kettle");
        }
    }

    #[test]
    fn unanswerable_and_withheld_are_discarded() {
        let withheld = [NamedTriple::new("apple", "objInLoc", "kitchen")];
        let mut o = SimulatedOracle::with_withheld(truth(), withheld, 0);
        assert_eq!(o.answer(&question(0, "apple", "hasColor", "red")), None);
        assert_eq!(o.answer(&question(0, "apple", "objInLoc", "kitchen")), None);
        // the only true tail is withheld, so no correction can be offered
        assert_eq!(o.answer(&question(0, "apple", "objInLoc", "bedroom")), None);
    }

    #[test]
    fn deterministic_under_seed() {
        let run = |seed| {
            let mut o = SimulatedOracle::new(truth(), seed);
            (0..10).map(|i| o.answer(&question(i, "mug", "nearTo", "sofa"))).collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
    }
}
