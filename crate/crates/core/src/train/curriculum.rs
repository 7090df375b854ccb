use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{train_session, ContinualStrategy, NoRehearsal, ReplayPool, SessionDataset, TrainConfig, TrainError, TrainReport};
use crate::eval::{evaluate_split, EvalMatrix, Protocol};
use crate::kb::{Triple, Vocabulary};
use crate::model::KgeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Each session trains on its own data only.
    Classical,
    /// Each session also rehearses the training splits of earlier sessions.
    Continual,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Classical => "classical",
            Mode::Continual => "continual",
        }
    }
}

impl FromStr for Mode {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classical" => Ok(Mode::Classical),
            "continual" => Ok(Mode::Continual),
            other => Err(TrainError::Config(format!("unknown mode `{other}` (expected classical or continual)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CurriculumOutcome {
    pub model: KgeModel,
    pub matrix: EvalMatrix,
    pub reports: Vec<TrainReport>,
    /// Past triples read by the continual strategy over the whole run.
    pub replay_reads: usize,
}

fn grow_seed(seed: u64, session: usize) -> u64 {
    seed.wrapping_add(0xA076_1D64_78BD_642F_u64.wrapping_mul(session as u64 + 1))
}

/// Trains on `sessions` in order and evaluates every dev split seen so far
/// after each one, filling the lower-triangular evaluation matrix.
///
/// The model starts sized for session 0 and grows before each later session
/// to cover the ids it introduces. Evaluation is filtered against every
/// split of every session up to the current one.
pub fn run_curriculum(
    sessions: &[SessionDataset],
    vocab: &Vocabulary,
    mode: Mode,
    config: &TrainConfig,
) -> Result<CurriculumOutcome, TrainError> {
    config.validate()?;
    if sessions.is_empty() {
        return Err(TrainError::Dataset("a curriculum needs at least one session".into()));
    }
    for (i, s) in sessions.iter().enumerate() {
        if s.index != i {
            return Err(TrainError::Dataset(format!("session at position {i} has index {}", s.index)));
        }
        let (e, r) = s.max_ids();
        if e > vocab.num_entities() || r > vocab.num_relations() {
            return Err(TrainError::Dataset(format!(
                "session {i} references ids beyond the vocabulary ({} entities, {} relations)",
                vocab.num_entities(),
                vocab.num_relations()
            )));
        }
    }

    let mut strategy: Box<dyn ContinualStrategy> = match mode {
        Mode::Classical => Box::new(NoRehearsal),
        Mode::Continual => Box::new(ReplayPool::new(config.replay_fraction)?),
    };

    let (e0, r0) = sessions[0].max_ids();
    let mut model = KgeModel::new(e0.max(2), r0.max(1), config.shape()?, config.learning_rate, config.seed)?;
    let mut matrix = EvalMatrix::new(Protocol::Filtered);
    let mut reports = Vec::with_capacity(sessions.len());
    let mut known: HashSet<Triple> = HashSet::new();

    for (k, session) in sessions.iter().enumerate() {
        let (e, r) = sessions[..=k].iter().map(SessionDataset::max_ids).fold((0, 0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        model.grow_to(e, r, grow_seed(config.seed, k));
        let (trained, report) = train_session(&model, session, strategy.as_ref(), config)?;
        model = trained;
        reports.push(report);
        strategy.end_session(session);

        known.extend(session.all().copied());
        let row = sessions[..=k]
            .iter()
            .map(|s| {
                let split = if s.dev.is_empty() { &s.train } else { &s.dev };
                evaluate_split(&model.params, split, &known, Protocol::Filtered)
            })
            .collect::<Result<Vec<_>, _>>()?;
        matrix.push_row(row)?;
    }

    Ok(CurriculumOutcome { model, matrix, reports, replay_reads: strategy.reads() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Metric;
    use crate::kb::{EntityId, RelationId};

    fn vocab(n_e: usize, n_r: usize) -> Vocabulary {
        let mut v = Vocabulary::default();
        for i in 0..n_e {
            v.register_entity(&format!("e{i}")).unwrap();
        }
        for i in 0..n_r {
            v.register_relation(&format!("r{i}")).unwrap();
        }
        v
    }

    fn session(index: usize, offset: u32) -> SessionDataset {
        let t = |h: u32, r: u32, tl: u32| Triple::new(EntityId(h + offset), RelationId(r), EntityId(tl + offset));
        SessionDataset {
            index,
            train: vec![t(0, 0, 1), t(1, 0, 2), t(2, 0, 3), t(3, 0, 0), t(0, 1, 2)],
            dev: vec![t(1, 1, 3)],
            test: vec![t(2, 1, 0)],
        }
    }

    fn small_config() -> TrainConfig {
        TrainConfig { dim: 8, blocks: 2, max_epochs: 20, patience: 5, ..Default::default() }
    }

    #[test]
    fn single_session_gives_one_cell() {
        let out = run_curriculum(&[session(0, 0)], &vocab(4, 2), Mode::Classical, &small_config()).unwrap();
        assert_eq!(out.matrix.len(), 1);
        assert_eq!(out.matrix.rows()[0].len(), 1);
        assert_eq!(out.reports.len(), 1);
    }

    #[test]
    fn lower_triangular_with_growth() {
        let sessions: Vec<_> = (0..3).map(|i| session(i, 4 * i as u32)).collect();
        let out = run_curriculum(&sessions, &vocab(12, 2), Mode::Continual, &small_config()).unwrap();
        assert_eq!(out.model.num_entities(), 12);
        for (i, row) in out.matrix.rows().iter().enumerate() {
            assert_eq!(row.len(), i + 1);
        }
        let csv = out.matrix.to_table_csv(Metric::HitsAt10);
        assert_eq!(csv.lines().nth(1).unwrap().matches("absent").count(), 2);
        assert!(out.replay_reads > 0);
    }

    #[test]
    fn classical_reads_nothing_from_the_past() {
        let sessions: Vec<_> = (0..3).map(|i| session(i, 4 * i as u32)).collect();
        let out = run_curriculum(&sessions, &vocab(12, 2), Mode::Classical, &small_config()).unwrap();
        assert_eq!(out.replay_reads, 0);
        assert!(out.reports.iter().all(|r| r.replayed == 0));
    }

    #[test]
    fn rejects_unregistered_ids_and_empty_input() {
        let cfg = small_config();
        assert!(run_curriculum(&[session(0, 0)], &vocab(3, 2), Mode::Classical, &cfg).is_err());
        assert!(run_curriculum(&[], &vocab(3, 2), Mode::Classical, &cfg).is_err());
        assert!(run_curriculum(&[session(1, 0)], &vocab(4, 2), Mode::Classical, &cfg).is_err());
    }

    #[test]
    fn mode_parses() {
        assert_eq!("continual".parse::<Mode>().unwrap(), Mode::Continual);
        assert!("both".parse::<Mode>().is_err());
    }
}
