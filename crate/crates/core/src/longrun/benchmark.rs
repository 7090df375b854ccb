//! The frozen six-session forgetting benchmark.

use super::sessions::{chronological, make_sessions};
use super::world::{generate_world, WorldSpec};
use super::LongrunError;
use crate::kb::Vocabulary;
use crate::train::{SessionDataset, TrainConfig};

pub const BENCHMARK_SESSIONS: usize = 6;
pub const BENCHMARK_NOVEL_FRACTION: f64 = 0.8;
pub const BENCHMARK_SPLIT_SEED: u64 = 42;
pub const BENCHMARK_TRAIN_SEED: u64 = 7;

/// 600 objects, 120 of them in the novel context. The 50-object desk world
/// is too small for session-0 dev Hits@10 to resolve a 0.05 change.
pub fn benchmark_world_spec() -> WorldSpec {
    WorldSpec { seed: 42, room_count: 3, object_count: 600, novel_object_count: 120, near_links: 3, ..WorldSpec::default() }
}

pub fn benchmark_train_config() -> TrainConfig {
    TrainConfig { seed: BENCHMARK_TRAIN_SEED, ..TrainConfig::default() }
}

/// Generates the benchmark sessions with chronological entity ids.
pub fn benchmark_sessions() -> Result<(Vocabulary, Vec<SessionDataset>), LongrunError> {
    let world = generate_world(&benchmark_world_spec())?;
    let sessions = make_sessions(&world, BENCHMARK_SESSIONS, BENCHMARK_NOVEL_FRACTION, BENCHMARK_SPLIT_SEED)?;
    Ok(chronological(world.kb.vocab(), &sessions)?)
}
