//! Dense RESCAL baseline: each relation slice `X_k` of the binary adjacency
//! tensor is factorised as `A R_k A^T`, fitted by full-gradient descent on
//!
//! ```text
//! 1/2 sum_k |X_k - A R_k A^T|_F^2 + lambda/2 (|A|_F^2 + sum_k |R_k|_F^2)
//! ```
//!
//! Meant for tiny graphs (tens of entities) in tests and demos.

use nalgebra::DMatrix;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelError;
use crate::kb::Triple;

#[derive(Debug, Clone, PartialEq)]
pub struct RescalFactors {
    /// One `n x n` slice per relation, entries 0 or 1.
    tensor: Vec<DMatrix<f64>>,
    /// `n x k` entity factors.
    pub factors: DMatrix<f64>,
    /// One `k x k` interaction matrix per relation.
    pub relations: Vec<DMatrix<f64>>,
    pub reg: f64,
}

impl RescalFactors {
    pub fn new(
        tensor: Vec<DMatrix<f64>>,
        factors: DMatrix<f64>,
        relations: Vec<DMatrix<f64>>,
        reg: f64,
    ) -> Result<Self, ModelError> {
        let n = factors.nrows();
        let k = factors.ncols();
        if tensor.len() != relations.len() {
            return Err(ModelError::Shape(format!("{} tensor slices but {} relation matrices", tensor.len(), relations.len())));
        }
        if let Some(s) = tensor.iter().find(|s| s.shape() != (n, n)) {
            return Err(ModelError::Shape(format!("tensor slice is {:?}, expected ({n}, {n})", s.shape())));
        }
        if let Some(r) = relations.iter().find(|r| r.shape() != (k, k)) {
            return Err(ModelError::Shape(format!("relation matrix is {:?}, expected ({k}, {k})", r.shape())));
        }
        if tensor.iter().flat_map(|s| s.iter()).any(|&x| x != 0.0 && x != 1.0) {
            return Err(ModelError::Shape("tensor entries must be 0 or 1".into()));
        }
        if reg.is_nan() || reg < 0.0 {
            return Err(ModelError::Config(format!("regularisation weight must be >= 0, got {reg}")));
        }
        Ok(Self { tensor, factors, relations, reg })
    }

    /// Builds the binary tensor from triples and draws random factors.
    pub fn from_triples(
        num_entities: usize,
        num_relations: usize,
        triples: &[Triple],
        rank: usize,
        reg: f64,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let mut tensor = vec![DMatrix::zeros(num_entities, num_entities); num_relations];
        for t in triples {
            let slice = tensor.get_mut(t.relation.index()).ok_or(ModelError::OutOfRange {
                kind: "relation",
                id: t.relation.0,
                len: num_relations,
            })?;
            if t.head.index() >= num_entities || t.tail.index() >= num_entities {
                return Err(ModelError::OutOfRange { kind: "entity", id: t.head.0.max(t.tail.0), len: num_entities });
            }
            slice[(t.head.index(), t.tail.index())] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(-0.5, 0.5);
        let factors = DMatrix::from_fn(num_entities, rank, |_, _| dist.sample(&mut rng));
        let relations = (0..num_relations)
            .map(|_| DMatrix::from_fn(rank, rank, |_, _| dist.sample(&mut rng)))
            .collect();
        Self::new(tensor, factors, relations, reg)
    }

    pub fn tensor(&self) -> &[DMatrix<f64>] {
        &self.tensor
    }

    fn residuals(&self) -> Vec<DMatrix<f64>> {
        let a = &self.factors;
        self.tensor
            .iter()
            .zip(&self.relations)
            .map(|(x, r)| a * r * a.transpose() - x)
            .collect()
    }

    pub fn loss(&self) -> f64 {
        let fit: f64 = self.residuals().iter().map(|e| e.norm_squared()).sum();
        let penalty = self.factors.norm_squared() + self.relations.iter().map(|r| r.norm_squared()).sum::<f64>();
        0.5 * fit + 0.5 * self.reg * penalty
    }

    /// Gradient with respect to `A` and each `R_k`.
    pub fn gradient(&self) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
        let a = &self.factors;
        let mut grad_a = a * self.reg;
        let mut grad_r = Vec::with_capacity(self.relations.len());
        for (e, r) in self.residuals().iter().zip(&self.relations) {
            grad_a += e * a * r.transpose() + e.transpose() * a * r;
            grad_r.push(a.transpose() * e * a + r * self.reg);
        }
        (grad_a, grad_r)
    }

    /// One full-gradient descent update.
    pub fn step(&mut self, learning_rate: f64) -> Result<(), ModelError> {
        if learning_rate.is_nan() || learning_rate <= 0.0 {
            return Err(ModelError::Config(format!("learning rate must be > 0, got {learning_rate}")));
        }
        let (grad_a, grad_r) = self.gradient();
        self.factors -= grad_a * learning_rate;
        for (r, g) in self.relations.iter_mut().zip(grad_r) {
            *r -= g * learning_rate;
        }
        Ok(())
    }
}
