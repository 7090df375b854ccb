//! Embedding models: ANALOGY (the trained model) and a small RESCAL
//! baseline, plus the on-disk checkpoint format.

mod analogy;
mod checkpoint;
mod rescal;

use thiserror::Error;

pub use analogy::{AnalogyParams, ModelShape, Scalar, TripleGradient};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use rescal::RescalFactors;

use crate::optim::Adagrad;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("{kind} id {id} out of range (have {len})")]
    OutOfRange { kind: &'static str, id: u32, len: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unsupported checkpoint: {0}")]
    Version(String),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Trainable model state: `f32` parameters plus their Adagrad accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct KgeModel {
    pub params: AnalogyParams<f32>,
    pub optimizer: Adagrad,
}

impl KgeModel {
    pub fn new(
        num_entities: usize,
        num_relations: usize,
        shape: ModelShape,
        learning_rate: f32,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let params = AnalogyParams::init(num_entities, num_relations, shape, seed)?;
        let optimizer = Adagrad::new(learning_rate, shape.dim, num_entities, num_relations);
        Ok(Self { params, optimizer })
    }

    /// Adds rows for new vocabulary; old rows and accumulators are untouched
    /// and new accumulators start at zero.
    pub fn grow_to(&mut self, num_entities: usize, num_relations: usize, seed: u64) {
        self.params.grow_to(num_entities, num_relations, seed);
        self.optimizer.grow_to(self.params.num_entities(), self.params.num_relations());
    }

    pub fn num_entities(&self) -> usize {
        self.params.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.params.num_relations()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growing_model_keeps_optimizer_in_step() {
        let shape = ModelShape::new(4, 1).unwrap();
        let mut m = KgeModel::new(2, 1, shape, 0.1, 0).unwrap();
        let mut row = m.params.entity(crate::kb::EntityId(0)).to_vec();
        m.optimizer.update_entity(0, &mut row, &[1.0; 4]);
        m.grow_to(5, 2, 1);
        assert_eq!(m.optimizer.entity_accumulators().len(), 5 * 4);
        assert_eq!(m.optimizer.relation_accumulators().len(), 2 * 4);
        assert_eq!(&m.optimizer.entity_accumulators()[..4], &[1.0; 4]);
        assert!(m.optimizer.entity_accumulators()[8..].iter().all(|&a| a == 0.0));
    }
}
