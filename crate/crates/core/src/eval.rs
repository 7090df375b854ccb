//! Link-prediction evaluation: exhaustive candidate ranking, MRR, Hits@k,
//! and the lower-triangular per-session evaluation matrix.
//!
//! Ranks are pessimistic: a candidate whose score ties the true entity's
//! score counts as ranked ahead of it. Filtered ranking drops candidates
//! that would form another known-true triple.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{EntityId, Triple, TripleSet};
use crate::model::{AnalogyParams, ModelError, Scalar};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot rank against an empty vocabulary")]
    EmptyVocabulary,
    #[error("metric over an empty rank list")]
    EmptyRanks,
    #[error("evaluation split is empty")]
    EmptySplit,
    #[error("rank must be >= 1, got 0")]
    ZeroRank,
    #[error("evaluation matrix row {row} must have {expected} entries, got {got}")]
    MatrixShape { row: usize, expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RankQuery {
    pub triple: Triple,
    pub side: Side,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Raw,
    #[default]
    Filtered,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Raw => "raw",
            Protocol::Filtered => "filtered",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" => Ok(Protocol::Raw),
            "filtered" => Ok(Protocol::Filtered),
            other => Err(format!("unknown protocol {other:?} (expected raw or filtered)")),
        }
    }
}

/// Rank of the true entity among all entities on the corrupted side.
pub fn rank_of<F: Scalar, K: TripleSet + ?Sized>(
    params: &AnalogyParams<F>,
    query: &RankQuery,
    known: &K,
    protocol: Protocol,
) -> Result<usize, EvalError> {
    let n = params.num_entities();
    if n == 0 {
        return Err(EvalError::EmptyVocabulary);
    }
    params.check_triple(&query.triple)?;
    let t = query.triple;
    let truth = params.score_unchecked(t.head, t.relation, t.tail);
    let mut ahead = 0;
    for c in 0..n as u32 {
        let candidate = match query.side {
            Side::Head => t.with_head(EntityId(c)),
            Side::Tail => t.with_tail(EntityId(c)),
        };
        if candidate == t {
            continue;
        }
        if protocol == Protocol::Filtered && known.contains(&candidate) {
            continue;
        }
        let s = params.score_unchecked(candidate.head, candidate.relation, candidate.tail);
        if s >= truth {
            ahead += 1;
        }
    }
    Ok(1 + ahead)
}

/// Mean reciprocal rank.
pub fn mrr(ranks: &[usize]) -> Result<f64, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::EmptyRanks);
    }
    if ranks.contains(&0) {
        return Err(EvalError::ZeroRank);
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// Fraction of ranks at or above `k`.
pub fn hits_at_k(ranks: &[usize], k: usize) -> Result<f64, EvalError> {
    if ranks.is_empty() {
        return Err(EvalError::EmptyRanks);
    }
    if ranks.contains(&0) {
        return Err(EvalError::ZeroRank);
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub mrr: f64,
    pub hits_at_10: f64,
    /// Number of ranked queries (two per triple).
    pub queries: usize,
}

/// Head- and tail-corruption ranks for every triple, in split order.
pub fn split_ranks<F: Scalar, K: TripleSet + Sync + ?Sized>(
    params: &AnalogyParams<F>,
    split: &[Triple],
    known: &K,
    protocol: Protocol,
) -> Result<Vec<usize>, EvalError> {
    if split.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let per_triple: Result<Vec<[usize; 2]>, EvalError> = split
        .par_iter()
        .map(|&triple| {
            Ok([
                rank_of(params, &RankQuery { triple, side: Side::Head }, known, protocol)?,
                rank_of(params, &RankQuery { triple, side: Side::Tail }, known, protocol)?,
            ])
        })
        .collect();
    Ok(per_triple?.into_iter().flatten().collect())
}

pub fn evaluate_split<F: Scalar, K: TripleSet + Sync + ?Sized>(
    params: &AnalogyParams<F>,
    split: &[Triple],
    known: &K,
    protocol: Protocol,
) -> Result<SplitMetrics, EvalError> {
    let ranks = split_ranks(params, split, known, protocol)?;
    Ok(SplitMetrics { mrr: mrr(&ranks)?, hits_at_10: hits_at_k(&ranks, 10)?, queries: ranks.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    Mrr,
    HitsAt10,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mrr => "mrr",
            Metric::HitsAt10 => "hits@10",
        }
    }

    pub fn of(self, m: &SplitMetrics) -> f64 {
        match self {
            Metric::Mrr => m.mrr,
            Metric::HitsAt10 => m.hits_at_10,
        }
    }
}

/// Row `i` holds metrics on splits `0..=i` after training session `i`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    pub protocol: Protocol,
    rows: Vec<Vec<SplitMetrics>>,
}

impl EvalMatrix {
    pub fn new(protocol: Protocol) -> Self {
        Self { protocol, rows: Vec::new() }
    }

    pub fn push_row(&mut self, row: Vec<SplitMetrics>) -> Result<(), EvalError> {
        let expected = self.rows.len() + 1;
        if row.len() != expected {
            return Err(EvalError::MatrixShape { row: self.rows.len(), expected, got: row.len() });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[Vec<SplitMetrics>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Metrics on `split` after training session `session`, if evaluated.
    pub fn get(&self, session: usize, split: usize) -> Option<&SplitMetrics> {
        self.rows.get(session)?.get(split)
    }

    /// How `metric` on one split evolved over the sessions that evaluated it.
    pub fn column(&self, split: usize, metric: Metric) -> Vec<f64> {
        self.rows.iter().filter_map(|row| row.get(split)).map(|m| metric.of(m)).collect()
    }

    /// Square table, one row per training session, `absent` where a split
    /// was not yet evaluated.
    pub fn to_table_csv(&self, metric: Metric) -> String {
        let n = self.rows.len();
        let mut out = String::from("train_session");
        for j in 0..n {
            let _ = write!(out, ",split_{j}");
        }
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            let _ = write!(out, "{i}");
            for j in 0..n {
                match row.get(j) {
                    Some(m) => {
                        let _ = write!(out, ",{:.6}", metric.of(m));
                    }
                    None => out.push_str(",absent"),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Long format: `train_session,eval_split,metric,protocol,value`.
    pub fn to_report_csv(&self) -> String {
        let mut out = String::from("train_session,eval_split,metric,protocol,value\n");
        for (i, row) in self.rows.iter().enumerate() {
            for (j, m) in row.iter().enumerate() {
                for metric in [Metric::Mrr, Metric::HitsAt10] {
                    let _ = writeln!(out, "{i},{j},{},{},{:.6}", metric.as_str(), self.protocol.as_str(), metric.of(m));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::RelationId;
    use crate::model::ModelShape;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn tr(h: u32, r: u32, t: u32) -> Triple {
        Triple::new(EntityId(h), RelationId(r), EntityId(t))
    }

    #[test]
    fn mrr_examples() {
        assert_eq!(mrr(&[1, 1, 1]).unwrap(), 1.0);
        assert!((mrr(&[1, 2, 4]).unwrap() - 0.583_333_333_333).abs() < 1e-9);
        for k in 1..20 {
            assert_eq!(mrr(&[k]).unwrap(), 1.0 / k as f64);
        }
        assert!(matches!(mrr(&[]), Err(EvalError::EmptyRanks)));
        assert!(matches!(mrr(&[0]), Err(EvalError::ZeroRank)));
    }

    #[test]
    fn hits_examples() {
        assert!((hits_at_k(&[1, 5, 11], 10).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(hits_at_k(&[1, 2, 3], 3).unwrap(), 1.0);
        assert!(matches!(hits_at_k(&[], 10), Err(EvalError::EmptyRanks)));
    }

    #[test]
    fn unique_maximum_ranks_first() {
        // d=2 identity operator: score(h, t) = <v_h, v_t>; entity 1 aligns best with 0
        let shape = ModelShape::new(2, 1).unwrap();
        let p = AnalogyParams::from_raw(shape, vec![1.0, 0.0, 2.0, 0.0, -1.0, 0.0, 0.0, 1.0], vec![1.0, 0.0]).unwrap();
        let empty: HashSet<Triple> = HashSet::new();
        let q = RankQuery { triple: tr(0, 0, 1), side: Side::Tail };
        assert_eq!(rank_of(&p, &q, &empty, Protocol::Raw).unwrap(), 1);
    }

    #[test]
    fn all_ties_rank_last() {
        let p = AnalogyParams::<f32>::zeros(7, 1, ModelShape::new(4, 1).unwrap()).unwrap();
        let empty: HashSet<Triple> = HashSet::new();
        for side in [Side::Head, Side::Tail] {
            let q = RankQuery { triple: tr(2, 0, 5), side };
            assert_eq!(rank_of(&p, &q, &empty, Protocol::Raw).unwrap(), 7);
        }
    }

    #[test]
    fn filtering_removes_known_competitors() {
        let p = AnalogyParams::<f32>::zeros(5, 1, ModelShape::new(4, 1).unwrap()).unwrap();
        let known: HashSet<Triple> = [tr(0, 0, 1), tr(0, 0, 2), tr(0, 0, 3)].into_iter().collect();
        let q = RankQuery { triple: tr(0, 0, 1), side: Side::Tail };
        assert_eq!(rank_of(&p, &q, &known, Protocol::Raw).unwrap(), 5);
        assert_eq!(rank_of(&p, &q, &known, Protocol::Filtered).unwrap(), 3);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let p = AnalogyParams::<f32>::zeros(0, 1, ModelShape::new(4, 1).unwrap()).unwrap();
        let q = RankQuery { triple: tr(0, 0, 0), side: Side::Tail };
        let empty: HashSet<Triple> = HashSet::new();
        assert!(matches!(rank_of(&p, &q, &empty, Protocol::Raw), Err(EvalError::EmptyVocabulary)));
    }

    #[test]
    fn split_of_one_triple_gives_two_queries() {
        let p = AnalogyParams::<f32>::init(6, 1, ModelShape::new(4, 1).unwrap(), 3).unwrap();
        let empty: HashSet<Triple> = HashSet::new();
        let m = evaluate_split(&p, &[tr(1, 0, 2)], &empty, Protocol::Filtered).unwrap();
        assert_eq!(m.queries, 2);
        assert!(m.mrr > 0.0 && m.mrr <= 1.0);
        assert!((0.0..=1.0).contains(&m.hits_at_10));
        assert!(matches!(evaluate_split(&p, &[], &empty, Protocol::Raw), Err(EvalError::EmptySplit)));
    }

    #[test]
    fn matrix_layout() {
        let m = SplitMetrics { mrr: 0.5, hits_at_10: 0.75, queries: 2 };
        let mut em = EvalMatrix::new(Protocol::Filtered);
        em.push_row(vec![m]).unwrap();
        assert!(em.push_row(vec![m]).is_err());
        em.push_row(vec![m, m]).unwrap();
        let csv = em.to_table_csv(Metric::HitsAt10);
        assert_eq!(csv, "train_session,split_0,split_1\n0,0.750000,absent\n1,0.750000,0.750000\n");
        assert_eq!(em.to_report_csv().lines().count(), 1 + 3 * 2);
        assert_eq!(em.column(0, Metric::Mrr), vec![0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn metrics_permutation_invariant(mut ranks in proptest::collection::vec(1usize..60, 1..40), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let before = (mrr(&ranks).unwrap(), hits_at_k(&ranks, 10).unwrap());
            ranks.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let after = (mrr(&ranks).unwrap(), hits_at_k(&ranks, 10).unwrap());
            prop_assert!((before.0 - after.0).abs() < 1e-12);
            prop_assert_eq!(before.1, after.1);
        }

        #[test]
        fn hits_monotone_in_k(ranks in proptest::collection::vec(1usize..60, 1..40)) {
            let mut prev = 0.0;
            for k in 1..70 {
                let h = hits_at_k(&ranks, k).unwrap();
                prop_assert!(h >= prev);
                prev = h;
            }
            prop_assert_eq!(prev, 1.0);
        }

        #[test]
        fn filtered_never_worse_than_raw(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p = AnalogyParams::<f64>::init(12, 2, ModelShape::new(8, 2).unwrap(), seed).unwrap();
            let known: HashSet<Triple> = (0..40).map(|_| tr(rng.gen_range(0..12), rng.gen_range(0..2), rng.gen_range(0..12))).collect();
            for &triple in &known {
                for side in [Side::Head, Side::Tail] {
                    let q = RankQuery { triple, side };
                    prop_assert!(rank_of(&p, &q, &known, Protocol::Filtered).unwrap() <= rank_of(&p, &q, &known, Protocol::Raw).unwrap());
                }
            }
        }
    }
}
