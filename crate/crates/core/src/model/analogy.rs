//! ANALOGY parameters: entity vectors plus relation operators that are
//! block-diagonal with `m` 2x2 blocks `[[a, -b], [b, a]]` followed by
//! `d - 2m` real diagonal entries. Every such matrix is normal, and any two
//! of them commute, because they share one block sparsity pattern.

use std::fmt::Debug;

use nalgebra::DMatrix;
use num_traits::{Float, NumCast};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ModelError;
use crate::kb::{EntityId, RelationId, Triple};

/// Floating point type the model can be stored in. Training uses `f32`;
/// numerical checks use `f64`.
pub trait Scalar: Float + Debug + Default + Send + Sync + std::iter::Sum + 'static {
    fn of(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 converts to any float")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Embedding dimension `d` and number of 2x2 rotation-scale blocks `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelShape {
    pub dim: usize,
    pub blocks: usize,
}

impl ModelShape {
    pub fn new(dim: usize, blocks: usize) -> Result<Self, ModelError> {
        let shape = Self { dim, blocks };
        shape.validate()?;
        Ok(shape)
    }

    /// Half of the coordinates in complex pairs, half real.
    pub fn with_default_blocks(dim: usize) -> Result<Self, ModelError> {
        Self::new(dim, dim / 4)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(ModelError::Config(format!("dimension must be even and positive, got {}", self.dim)));
        }
        if 2 * self.blocks > self.dim {
            return Err(ModelError::Config(format!(
                "{} block pairs need {} coordinates but dimension is {}",
                self.blocks,
                2 * self.blocks,
                self.dim
            )));
        }
        Ok(())
    }

    /// Half-width of the uniform initialisation interval, `6 / sqrt(d)`.
    pub fn init_bound(&self) -> f64 {
        6.0 / (self.dim as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalogyParams<F = f32> {
    shape: ModelShape,
    entities: Vec<F>,
    relations: Vec<F>,
}

/// Loss of one labelled triple and its gradient restricted to the three
/// parameter rows the triple touches. When head and tail are the same
/// entity, the full gradient for that row is `head + tail`.
#[derive(Debug, Clone, PartialEq)]
pub struct TripleGradient<F> {
    pub loss: F,
    pub head: Vec<F>,
    pub relation: Vec<F>,
    pub tail: Vec<F>,
}

fn fill_uniform<F: Scalar>(out: &mut Vec<F>, count: usize, bound: f64, rng: &mut ChaCha8Rng) {
    let dist = Uniform::new_inclusive(-bound, bound);
    out.extend((0..count).map(|_| F::of(dist.sample(rng))));
}

impl<F: Scalar> AnalogyParams<F> {
    pub fn zeros(num_entities: usize, num_relations: usize, shape: ModelShape) -> Result<Self, ModelError> {
        shape.validate()?;
        Ok(Self {
            shape,
            entities: vec![F::zero(); num_entities * shape.dim],
            relations: vec![F::zero(); num_relations * shape.dim],
        })
    }

    /// Entries i.i.d. uniform on `[-6/sqrt(d), 6/sqrt(d)]`, entity rows first.
    pub fn init(num_entities: usize, num_relations: usize, shape: ModelShape, seed: u64) -> Result<Self, ModelError> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = shape.init_bound();
        let mut entities = Vec::with_capacity(num_entities * shape.dim);
        fill_uniform(&mut entities, num_entities * shape.dim, bound, &mut rng);
        let mut relations = Vec::with_capacity(num_relations * shape.dim);
        fill_uniform(&mut relations, num_relations * shape.dim, bound, &mut rng);
        Ok(Self { shape, entities, relations })
    }

    pub fn from_raw(shape: ModelShape, entities: Vec<F>, relations: Vec<F>) -> Result<Self, ModelError> {
        shape.validate()?;
        if !entities.len().is_multiple_of(shape.dim) || !relations.len().is_multiple_of(shape.dim) {
            return Err(ModelError::Shape(format!(
                "parameter arrays of length {} and {} are not multiples of d={}",
                entities.len(),
                relations.len(),
                shape.dim
            )));
        }
        Ok(Self { shape, entities, relations })
    }

    /// Appends freshly initialised rows; existing rows are not touched.
    pub fn grow(&mut self, new_entities: usize, new_relations: usize, seed: u64) {
        if new_entities == 0 && new_relations == 0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = self.shape.init_bound();
        fill_uniform(&mut self.entities, new_entities * self.shape.dim, bound, &mut rng);
        fill_uniform(&mut self.relations, new_relations * self.shape.dim, bound, &mut rng);
    }

    /// Grows to at least the given row counts.
    pub fn grow_to(&mut self, num_entities: usize, num_relations: usize, seed: u64) {
        let de = num_entities.saturating_sub(self.num_entities());
        let dr = num_relations.saturating_sub(self.num_relations());
        self.grow(de, dr, seed);
    }

    pub fn shape(&self) -> ModelShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len() / self.shape.dim
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len() / self.shape.dim
    }

    pub fn entity_data(&self) -> &[F] {
        &self.entities
    }

    pub fn relation_data(&self) -> &[F] {
        &self.relations
    }

    pub fn entity(&self, id: EntityId) -> &[F] {
        let d = self.shape.dim;
        &self.entities[id.index() * d..(id.index() + 1) * d]
    }

    pub fn relation(&self, id: RelationId) -> &[F] {
        let d = self.shape.dim;
        &self.relations[id.index() * d..(id.index() + 1) * d]
    }

    pub fn entity_mut(&mut self, id: EntityId) -> &mut [F] {
        let d = self.shape.dim;
        &mut self.entities[id.index() * d..(id.index() + 1) * d]
    }

    pub fn relation_mut(&mut self, id: RelationId) -> &mut [F] {
        let d = self.shape.dim;
        &mut self.relations[id.index() * d..(id.index() + 1) * d]
    }

    pub fn check_triple(&self, triple: &Triple) -> Result<(), ModelError> {
        self.check_entity(triple.head)?;
        self.check_relation(triple.relation)?;
        self.check_entity(triple.tail)
    }

    pub fn check_entity(&self, id: EntityId) -> Result<(), ModelError> {
        if id.index() >= self.num_entities() {
            return Err(ModelError::OutOfRange { kind: "entity", id: id.0, len: self.num_entities() });
        }
        Ok(())
    }

    pub fn check_relation(&self, id: RelationId) -> Result<(), ModelError> {
        if id.index() >= self.num_relations() {
            return Err(ModelError::OutOfRange { kind: "relation", id: id.0, len: self.num_relations() });
        }
        Ok(())
    }

    /// `<v_h, W_r v_t>` via the block kernel.
    pub fn score(&self, head: EntityId, relation: RelationId, tail: EntityId) -> Result<F, ModelError> {
        self.check_triple(&Triple::new(head, relation, tail))?;
        Ok(self.score_unchecked(head, relation, tail))
    }

    /// Same as [`score`](Self::score) without bounds reporting; panics on bad ids.
    pub fn score_unchecked(&self, head: EntityId, relation: RelationId, tail: EntityId) -> F {
        block_bilinear(self.shape.blocks, self.entity(head), self.relation(relation), self.entity(tail))
    }

    /// Logistic loss `log(1 + exp(-y * score))` and its gradient.
    pub fn loss_and_gradients(&self, triple: &Triple, label: f64) -> Result<TripleGradient<F>, ModelError> {
        self.check_triple(triple)?;
        let (h, w, t) = (self.entity(triple.head), self.relation(triple.relation), self.entity(triple.tail));
        let phi = block_bilinear(self.shape.blocks, h, w, t);
        let y = F::of(label);
        let (loss, dloss) = logistic(phi, y);
        let d = self.shape.dim;
        let mut grad = TripleGradient { loss, head: vec![F::zero(); d], relation: vec![F::zero(); d], tail: vec![F::zero(); d] };
        accumulate_score_gradient(
            self.shape.blocks,
            h,
            w,
            t,
            dloss,
            &mut grad.head,
            &mut grad.relation,
            &mut grad.tail,
        );
        Ok(grad)
    }

    /// Dense `d x d` matrix of a relation operator.
    pub fn materialize_relation(&self, relation: RelationId) -> Result<DMatrix<f64>, ModelError> {
        self.check_relation(relation)?;
        let w = self.relation(relation);
        let d = self.shape.dim;
        let mut m = DMatrix::zeros(d, d);
        for i in 0..self.shape.blocks {
            let (a, b) = (w[2 * i].as_f64(), w[2 * i + 1].as_f64());
            m[(2 * i, 2 * i)] = a;
            m[(2 * i, 2 * i + 1)] = -b;
            m[(2 * i + 1, 2 * i)] = b;
            m[(2 * i + 1, 2 * i + 1)] = a;
        }
        for j in 2 * self.shape.blocks..d {
            m[(j, j)] = w[j].as_f64();
        }
        Ok(m)
    }

    /// Converts storage precision.
    pub fn cast<G: Scalar>(&self) -> AnalogyParams<G> {
        AnalogyParams {
            shape: self.shape,
            entities: self.entities.iter().map(|x| G::of(x.as_f64())).collect(),
            relations: self.relations.iter().map(|x| G::of(x.as_f64())).collect(),
        }
    }
}

/// Returns `(loss, d loss / d score)` for the logistic loss.
fn logistic<F: Scalar>(phi: F, y: F) -> (F, F) {
    let z = -y * phi;
    // softplus(z) without overflow
    let loss = if z > F::zero() { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
    let sigma = F::one() / (F::one() + (-z).exp());
    (loss, -y * sigma)
}

/// `sum_i s1 (a o1 - b o2) + s2 (b o1 + a o2)` over blocks, plus
/// `sum_j c_j s_j o_j` over the scalar coordinates.
pub(crate) fn block_bilinear<F: Scalar>(blocks: usize, h: &[F], w: &[F], t: &[F]) -> F {
    let mut acc = F::zero();
    for i in 0..blocks {
        let (a, b) = (w[2 * i], w[2 * i + 1]);
        let (s1, s2) = (h[2 * i], h[2 * i + 1]);
        let (o1, o2) = (t[2 * i], t[2 * i + 1]);
        acc = acc + s1 * (a * o1 - b * o2) + s2 * (b * o1 + a * o2);
    }
    for j in 2 * blocks..w.len() {
        acc = acc + w[j] * h[j] * t[j];
    }
    acc
}

/// Adds `coef * d score / d theta` into the three gradient rows.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_score_gradient<F: Scalar>(
    blocks: usize,
    h: &[F],
    w: &[F],
    t: &[F],
    coef: F,
    gh: &mut [F],
    gw: &mut [F],
    gt: &mut [F],
) {
    for i in 0..blocks {
        let (p, q) = (2 * i, 2 * i + 1);
        let (a, b) = (w[p], w[q]);
        let (s1, s2) = (h[p], h[q]);
        let (o1, o2) = (t[p], t[q]);
        gh[p] = gh[p] + coef * (a * o1 - b * o2);
        gh[q] = gh[q] + coef * (b * o1 + a * o2);
        gt[p] = gt[p] + coef * (a * s1 + b * s2);
        gt[q] = gt[q] + coef * (a * s2 - b * s1);
        gw[p] = gw[p] + coef * (s1 * o1 + s2 * o2);
        gw[q] = gw[q] + coef * (s2 * o1 - s1 * o2);
    }
    for j in 2 * blocks..w.len() {
        gh[j] = gh[j] + coef * w[j] * t[j];
        gt[j] = gt[j] + coef * w[j] * h[j];
        gw[j] = gw[j] + coef * h[j] * t[j];
    }
}
