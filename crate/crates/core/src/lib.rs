//! Continual knowledge-graph embedding engine.
//!
//! Facts enter an append-only [`kb::KnowledgeBase`] either by import or
//! through the question/answer acquisition loop in [`acquisition`]. An
//! ANALOGY model ([`model`]) is trained session by session ([`train`]),
//! optionally with experience replay, and evaluated by exhaustive
//! link-prediction ranking ([`eval`]). [`longrun`] simulates a household
//! world and the explore/train schedule that ties everything together.

pub mod acquisition;
pub mod engine;
pub mod eval;
pub mod kb;
pub mod longrun;
pub mod model;
pub mod optim;
pub mod train;
