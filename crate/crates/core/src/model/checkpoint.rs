//! Checkpoint layout, little-endian throughout:
//!
//! ```text
//! "KGE1" | version u32 | d u32 | m u32 | n_entities u32 | n_relations u32
//!        | entity matrix f32[n_entities * d] | relation matrix f32[n_relations * d]
//!        | entity accumulators f32[n_entities * d] | relation accumulators f32[n_relations * d]
//! ```
//!
//! Matrices are row-major. The learning rate is configuration, not state,
//! and is supplied on load.

use std::path::Path;

use super::{AnalogyParams, KgeModel, ModelError, ModelShape};
use crate::optim::Adagrad;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KGE1";
pub const CHECKPOINT_VERSION: u32 = 1;

pub(crate) fn encode(model: &KgeModel) -> Vec<u8> {
    let p = &model.params;
    let shape = p.shape();
    let mut buf = Vec::with_capacity(24 + 8 * (p.entity_data().len() + p.relation_data().len()));
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [CHECKPOINT_VERSION, shape.dim as u32, shape.blocks as u32, p.num_entities() as u32, p.num_relations() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for arr in [
        p.entity_data(),
        p.relation_data(),
        model.optimizer.entity_accumulators(),
        model.optimizer.relation_accumulators(),
    ] {
        for x in arr {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

pub(crate) fn decode(bytes: &[u8], learning_rate: f32) -> Result<KgeModel, ModelError> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(ModelError::Version("missing KGE1 magic header".into()));
    }
    if bytes.len() < 24 {
        return Err(ModelError::Corrupt("truncated header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let version = word(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Version(format!("format version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let shape = ModelShape::new(word(1), word(2)).map_err(|e| ModelError::Corrupt(e.to_string()))?;
    let (n_ent, n_rel) = (word(3), word(4));
    let ent_len = n_ent * shape.dim;
    let rel_len = n_rel * shape.dim;
    let expected = 24 + 8 * (ent_len + rel_len);
    if bytes.len() != expected {
        return Err(ModelError::Corrupt(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let mut floats = bytes[24..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| floats.by_ref().take(n).collect::<Vec<f32>>();
    let entities = take(ent_len);
    let relations = take(rel_len);
    let entity_acc = take(ent_len);
    let relation_acc = take(rel_len);
    Ok(KgeModel {
        params: AnalogyParams::from_raw(shape, entities, relations)?,
        optimizer: Adagrad::from_raw(learning_rate, shape.dim, entity_acc, relation_acc),
    })
}

pub fn save_checkpoint(model: &KgeModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, encode(model)).map_err(|source| ModelError::Io { path: path.display().to_string(), source })
}

pub fn load_checkpoint(path: impl AsRef<Path>, learning_rate: f32) -> Result<KgeModel, ModelError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
    decode(&bytes, learning_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{EntityId, RelationId};

    fn model() -> KgeModel {
        let shape = ModelShape::new(8, 2).unwrap();
        let mut m = KgeModel::new(7, 3, shape, 0.1, 42).unwrap();
        let mut row = m.params.entity(EntityId(3)).to_vec();
        m.optimizer.update_entity(3, &mut row, &[0.5; 8]);
        m.params.entity_mut(EntityId(3)).copy_from_slice(&row);
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let back = decode(&encode(&m), 0.1).unwrap();
        assert_eq!(back, m);
        for h in 0..7 {
            for t in 0..7 {
                let a = m.params.score(EntityId(h), RelationId(2), EntityId(t)).unwrap();
                let b = back.params.score(EntityId(h), RelationId(2), EntityId(t)).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert_eq!(encode(&back), encode(&m));
    }

    #[test]
    fn header_fields() {
        let bytes = encode(&model());
        assert_eq!(&bytes[..4], b"KGE1");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 7);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 24 + 4 * 2 * (7 * 8 + 3 * 8));
        // first entity float follows the header
        let first = f32::from_le_bytes(bytes[24..28].try_into().unwrap());
        assert_eq!(first, model().params.entity_data()[0]);
    }

    #[test]
    fn rejects_bad_input() {
        let mut bytes = encode(&model());
        assert!(matches!(decode(&bytes[..bytes.len() - 1], 0.1), Err(ModelError::Corrupt(_))));
        bytes[4] = 2;
        assert!(matches!(decode(&bytes, 0.1), Err(ModelError::Version(_))));
        assert!(matches!(decode(b"KGKB", 0.1), Err(ModelError::Version(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.kge");
        let m = model();
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path, 0.1).unwrap(), m);
    }
}
