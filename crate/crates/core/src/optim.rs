//! Adagrad with per-coordinate accumulators laid out like the parameters.
//!
//! ```text
//! acc   += g^2
//! theta -= lr * g / (sqrt(acc) + eps)
//! ```

#[derive(Debug, Clone, PartialEq)]
pub struct Adagrad {
    pub learning_rate: f32,
    pub epsilon: f32,
    dim: usize,
    entity_acc: Vec<f32>,
    relation_acc: Vec<f32>,
}

impl Adagrad {
    pub fn new(learning_rate: f32, dim: usize, num_entities: usize, num_relations: usize) -> Self {
        Self {
            learning_rate,
            epsilon: 1e-10,
            dim,
            entity_acc: vec![0.0; num_entities * dim],
            relation_acc: vec![0.0; num_relations * dim],
        }
    }

    pub(crate) fn from_raw(learning_rate: f32, dim: usize, entity_acc: Vec<f32>, relation_acc: Vec<f32>) -> Self {
        Self { learning_rate, epsilon: 1e-10, dim, entity_acc, relation_acc }
    }

    /// New rows start with a zero accumulator.
    pub fn grow_to(&mut self, num_entities: usize, num_relations: usize) {
        if self.entity_acc.len() < num_entities * self.dim {
            self.entity_acc.resize(num_entities * self.dim, 0.0);
        }
        if self.relation_acc.len() < num_relations * self.dim {
            self.relation_acc.resize(num_relations * self.dim, 0.0);
        }
    }

    pub fn entity_accumulators(&self) -> &[f32] {
        &self.entity_acc
    }

    pub fn relation_accumulators(&self) -> &[f32] {
        &self.relation_acc
    }

    pub fn update_entity(&mut self, row: usize, params: &mut [f32], grad: &[f32]) {
        let acc = &mut self.entity_acc[row * self.dim..(row + 1) * self.dim];
        step(self.learning_rate, self.epsilon, acc, params, grad);
    }

    pub fn update_relation(&mut self, row: usize, params: &mut [f32], grad: &[f32]) {
        let acc = &mut self.relation_acc[row * self.dim..(row + 1) * self.dim];
        step(self.learning_rate, self.epsilon, acc, params, grad);
    }
}

fn step(lr: f32, eps: f32, acc: &mut [f32], params: &mut [f32], grad: &[f32]) {
    for ((a, p), &g) in acc.iter_mut().zip(params.iter_mut()).zip(grad) {
        *a += g * g;
        *p -= lr * g / (a.sqrt() + eps);
    }
}
