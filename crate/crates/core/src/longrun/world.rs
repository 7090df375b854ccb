use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LongrunError;
use crate::kb::{EntityId, KnowledgeBase, NamedTriple, Source, Triple};

pub const OBJ_IN_LOC: &str = "objInLoc";
pub const HAS_MATERIAL: &str = "hasMaterial";
pub const HAS_COLOR: &str = "hasColor";
pub const CAN_CONTAIN: &str = "canContain";
pub const NEAR_TO: &str = "nearTo";

pub const RELATIONS: [&str; 5] = [OBJ_IN_LOC, HAS_MATERIAL, HAS_COLOR, CAN_CONTAIN, NEAR_TO];

/// Probability that an object is placed in one of its category's rooms.
const ROOM_AFFINITY: f64 = 0.85;
const MATERIAL_AFFINITY: f64 = 0.9;
const NEAR_PROBABILITY: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldSpec {
    pub seed: u64,
    pub room_count: usize,
    /// Objects in the whole world, novel ones included.
    pub object_count: usize,
    /// Objects living in the separate novel context (new rooms, materials
    /// and colors). At least one object always stays in the main context.
    pub novel_object_count: usize,
    pub novel_room_count: usize,
    pub materials: Vec<String>,
    pub colors: Vec<String>,
    pub novel_materials: Vec<String>,
    pub novel_colors: Vec<String>,
    /// Share of the final session's triples that must involve only
    /// entities unseen in earlier sessions.
    pub novel_fraction: f64,
    /// `nearTo` links drawn per object towards co-located objects.
    pub near_links: usize,
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| (*s).to_owned()).collect()
}

impl Default for WorldSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            room_count: 3,
            object_count: 50,
            novel_object_count: 10,
            novel_room_count: 2,
            materials: strings(&["wood", "plastic", "metal", "glass", "ceramic", "fabric", "paper", "leather", "steel", "organic"]),
            colors: strings(&["red", "blue", "green", "white", "black", "yellow", "brown", "grey"]),
            novel_materials: strings(&["bamboo", "marble", "wicker", "copper"]),
            novel_colors: strings(&["teal", "magenta", "olive", "beige"]),
            novel_fraction: 0.8,
            near_links: 1,
        }
    }
}

struct Category {
    rooms: &'static [&'static str],
    materials: &'static [&'static str],
    colors: &'static [&'static str],
    types: &'static [&'static str],
    containers: &'static [&'static str],
}

const MAIN_ROOMS: [&str; 5] = ["kitchen", "living_room", "bedroom", "bathroom", "office"];
const NOVEL_ROOMS: [&str; 4] = ["attic", "garden", "cellar", "balcony"];

const CATEGORIES: [Category; 7] = [
    Category {
        rooms: &["kitchen"],
        materials: &["organic"],
        colors: &["red", "yellow", "green", "brown"],
        types: &["apple", "bread", "banana", "egg", "tomato", "potato", "lettuce"],
        containers: &[],
    },
    Category {
        rooms: &["kitchen"],
        materials: &["ceramic", "glass", "steel"],
        colors: &["white", "grey", "black"],
        types: &["mug", "pan", "pot", "plate", "bowl", "kettle", "cup", "knife"],
        containers: &["mug", "pot", "bowl", "cup", "pan"],
    },
    Category {
        rooms: &["living_room", "bedroom", "office"],
        materials: &["wood", "fabric"],
        colors: &["brown", "white", "black"],
        types: &["sofa", "chair", "table", "bed", "shelf", "desk", "dresser", "armchair"],
        containers: &["shelf", "dresser", "desk"],
    },
    Category {
        rooms: &["living_room", "office"],
        materials: &["plastic", "metal"],
        colors: &["black", "grey", "white"],
        types: &["television", "laptop", "lamp", "phone", "remote", "speaker"],
        containers: &[],
    },
    Category {
        rooms: &["bedroom"],
        materials: &["fabric", "leather"],
        colors: &["blue", "red", "white", "black"],
        types: &["shirt", "pillow", "blanket", "sock", "jacket", "backpack"],
        containers: &["backpack"],
    },
    Category {
        rooms: &["bathroom"],
        materials: &["plastic", "glass"],
        colors: &["white", "blue", "green"],
        types: &["soap", "toothbrush", "sponge", "shampoo", "towel", "cabinet"],
        containers: &["cabinet"],
    },
    Category {
        rooms: &["office"],
        materials: &["paper", "plastic"],
        colors: &["white", "yellow", "blue"],
        types: &["book", "pen", "notebook", "box", "folder", "stapler"],
        containers: &["box", "folder"],
    },
];

const NOVEL_TYPES: [&str; 12] = [
    "vase", "guitar", "telescope", "easel", "aquarium", "candle", "globe", "drum", "hammock", "birdcage", "statue", "trunk",
];
const NOVEL_CONTAINERS: [&str; 4] = ["vase", "aquarium", "birdcage", "trunk"];

/// Generated ground truth plus which entities belong to the novel context.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub kb: KnowledgeBase,
    novel: HashSet<EntityId>,
}

impl World {
    pub fn is_novel(&self, entity: EntityId) -> bool {
        self.novel.contains(&entity)
    }

    pub fn triples(&self) -> Vec<Triple> {
        self.kb.triples().collect()
    }

    pub fn named_triples(&self) -> Vec<NamedTriple> {
        self.kb.triples().map(|t| self.kb.names(&t).expect("world triples are registered")).collect()
    }

    /// Names of all objects (heads of `objInLoc`), in registration order.
    pub fn objects(&self) -> Vec<String> {
        let Some(loc) = self.kb.vocab().relation_id(OBJ_IN_LOC) else { return Vec::new() };
        self.kb
            .triples()
            .filter(|t| t.relation == loc)
            .map(|t| self.kb.vocab().entity_name(t.head).expect("registered").to_owned())
            .collect()
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<(), LongrunError> {
        let bad = |m: String| Err(LongrunError::Config(m));
        if self.room_count == 0 || self.object_count == 0 {
            return bad("room and object counts must be at least 1".into());
        }
        if self.materials.is_empty() || self.colors.is_empty() {
            return bad("material and color pools must be non-empty".into());
        }
        if self.novel_objects() > 0 && (self.novel_room_count == 0 || self.novel_materials.is_empty() || self.novel_colors.is_empty()) {
            return bad("novel objects need at least one novel room, material and color".into());
        }
        if !(0.0..=1.0).contains(&self.novel_fraction) {
            return bad(format!("novel fraction must lie in [0, 1], got {}", self.novel_fraction));
        }
        let mut names = HashSet::new();
        let pools = [&self.materials, &self.colors, &self.novel_materials, &self.novel_colors];
        for name in pools.into_iter().flatten() {
            if !names.insert(name.as_str()) {
                return bad(format!("`{name}` appears in more than one material/color pool"));
            }
        }
        Ok(())
    }

    pub fn novel_objects(&self) -> usize {
        self.novel_object_count.min(self.object_count.saturating_sub(1))
    }

    fn rooms(pool: &[&str], count: usize, prefix: &str) -> Vec<String> {
        (0..count).map(|i| pool.get(i).map_or_else(|| format!("{prefix}_{}", i + 1), |s| (*s).to_owned())).collect()
    }
}

struct Placed {
    name: String,
    room: usize,
    container: bool,
}

struct Namer {
    counts: BTreeMap<String, usize>,
}

impl Namer {
    fn name(&mut self, base: &str) -> String {
        let n = self.counts.entry(base.to_owned()).or_insert(0);
        *n += 1;
        if *n == 1 {
            base.to_owned()
        } else {
            format!("{base}_{n}")
        }
    }
}

fn pick<'a, R: Rng>(preferred: &[&'a str], fallback: &'a [String], affinity: f64, rng: &mut R) -> &'a str {
    let available: Vec<&str> = preferred.iter().copied().filter(|p| fallback.iter().any(|f| f == p)).collect();
    if !available.is_empty() && rng.gen_bool(affinity) {
        available[rng.gen_range(0..available.len())]
    } else {
        fallback[rng.gen_range(0..fallback.len())].as_str()
    }
}

/// Emits relational facts for one context (main or novel) in a fixed order.
fn relate<R: Rng>(objects: &[Placed], rooms: &[String], near_links: usize, out: &mut Vec<NamedTriple>, rng: &mut R) {
    let mut by_room: Vec<Vec<usize>> = vec![Vec::new(); rooms.len()];
    for (i, o) in objects.iter().enumerate() {
        by_room[o.room].push(i);
    }
    let mut seen: HashSet<(usize, usize)> = HashSet::new();
    for (i, o) in objects.iter().enumerate() {
        if !o.container {
            continue;
        }
        let mut mates: Vec<usize> = by_room[o.room].iter().copied().filter(|&j| j != i && !objects[j].container).collect();
        mates.shuffle(rng);
        let k = rng.gen_range(1..=2).min(mates.len());
        for &j in &mates[..k] {
            out.push(NamedTriple::new(&o.name, CAN_CONTAIN, &objects[j].name));
        }
    }
    for (i, o) in objects.iter().enumerate() {
        for _ in 0..near_links {
            let mates: Vec<usize> = by_room[o.room].iter().copied().filter(|&j| j != i).collect();
            if mates.is_empty() || !rng.gen_bool(NEAR_PROBABILITY) {
                continue;
            }
            let j = mates[rng.gen_range(0..mates.len())];
            if seen.insert((i, j)) {
                out.push(NamedTriple::new(&o.name, NEAR_TO, &objects[j].name));
            }
        }
    }
}

/// Deterministic household world: every object has exactly one location,
/// material and color; containers hold one or two co-located objects and
/// most objects are near another object in the same room.
pub fn generate_world(spec: &WorldSpec) -> Result<World, LongrunError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut namer = Namer { counts: BTreeMap::new() };
    let main_rooms = WorldSpec::rooms(&MAIN_ROOMS, spec.room_count, "room");
    let novel_rooms = WorldSpec::rooms(&NOVEL_ROOMS, spec.novel_room_count, "novel_room");
    let main_count = spec.object_count - spec.novel_objects();

    let mut facts = Vec::new();
    let mut main_objects = Vec::with_capacity(main_count);
    for _ in 0..main_count {
        let cat = &CATEGORIES[rng.gen_range(0..CATEGORIES.len())];
        let kind = cat.types[rng.gen_range(0..cat.types.len())];
        let name = namer.name(kind);
        let room_name = pick(cat.rooms, &main_rooms, ROOM_AFFINITY, &mut rng);
        let room = main_rooms.iter().position(|r| r == room_name).expect("picked from pool");
        facts.push(NamedTriple::new(&name, OBJ_IN_LOC, room_name));
        facts.push(NamedTriple::new(&name, HAS_MATERIAL, pick(cat.materials, &spec.materials, MATERIAL_AFFINITY, &mut rng)));
        facts.push(NamedTriple::new(&name, HAS_COLOR, pick(cat.colors, &spec.colors, MATERIAL_AFFINITY, &mut rng)));
        main_objects.push(Placed { name, room, container: cat.containers.contains(&kind) });
    }
    relate(&main_objects, &main_rooms, spec.near_links, &mut facts, &mut rng);

    let mut novel_objects = Vec::new();
    let mut novel_facts = Vec::new();
    for i in 0..spec.novel_objects() {
        let kind = NOVEL_TYPES[i % NOVEL_TYPES.len()];
        let name = namer.name(kind);
        let room = rng.gen_range(0..novel_rooms.len());
        novel_facts.push(NamedTriple::new(&name, OBJ_IN_LOC, &novel_rooms[room]));
        novel_facts.push(NamedTriple::new(&name, HAS_MATERIAL, spec.novel_materials.choose(&mut rng).expect("validated")));
        novel_facts.push(NamedTriple::new(&name, HAS_COLOR, spec.novel_colors.choose(&mut rng).expect("validated")));
        novel_objects.push(Placed { name, room, container: NOVEL_CONTAINERS.contains(&kind) });
    }
    relate(&novel_objects, &novel_rooms, spec.near_links, &mut novel_facts, &mut rng);

    let mut kb = KnowledgeBase::new();
    for rel in RELATIONS {
        kb.register_relation(rel)?;
    }
    for f in &facts {
        let t = kb.intern_triple(&f.head, &f.relation, &f.tail)?;
        kb.add_triple(t, Source::Imported, 0)?;
    }
    let mut novel = HashSet::new();
    for f in &novel_facts {
        let t = kb.intern_triple(&f.head, &f.relation, &f.tail)?;
        kb.add_triple(t, Source::Imported, 0)?;
        novel.insert(t.head);
        novel.insert(t.tail);
    }
    Ok(World { spec: spec.clone(), kb, novel })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn one_room_one_object_has_three_facts() {
        let spec = WorldSpec { room_count: 1, object_count: 1, ..Default::default() };
        let w = generate_world(&spec).unwrap();
        assert_eq!(w.kb.len(), 3);
        let rels: HashSet<_> = w.named_triples().into_iter().map(|t| t.relation).collect();
        assert_eq!(rels, [OBJ_IN_LOC, HAS_MATERIAL, HAS_COLOR].iter().map(|s| s.to_string()).collect());
    }

    #[test]
    fn same_seed_same_world() {
        let spec = WorldSpec::default();
        assert_eq!(generate_world(&spec).unwrap().named_triples(), generate_world(&spec).unwrap().named_triples());
        let other = WorldSpec { seed: 43, ..Default::default() };
        assert_ne!(generate_world(&spec).unwrap().named_triples(), generate_world(&other).unwrap().named_triples());
    }

    #[test]
    fn functional_relations_have_one_tail() {
        for seed in 0..20 {
            let w = generate_world(&WorldSpec { seed, ..Default::default() }).unwrap();
            let mut per_head: HashMap<(String, String), usize> = HashMap::new();
            for t in w.named_triples() {
                *per_head.entry((t.head, t.relation)).or_default() += 1;
            }
            let objects = w.objects();
            assert_eq!(objects.len(), 50);
            for o in &objects {
                for rel in [OBJ_IN_LOC, HAS_MATERIAL, HAS_COLOR] {
                    assert_eq!(per_head[&(o.clone(), rel.to_string())], 1, "{o} {rel}");
                }
            }
        }
    }

    #[test]
    fn novel_context_is_disjoint() {
        let w = generate_world(&WorldSpec::default()).unwrap();
        let triples = w.triples();
        let novel: Vec<_> = triples.iter().filter(|t| w.is_novel(t.head)).collect();
        assert!(!novel.is_empty());
        for t in triples {
            assert_eq!(w.is_novel(t.head), w.is_novel(t.tail), "{t} crosses contexts");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(generate_world(&WorldSpec { room_count: 0, ..Default::default() }).is_err());
        assert!(generate_world(&WorldSpec { novel_fraction: 1.5, ..Default::default() }).is_err());
        let clash = WorldSpec { colors: vec!["wood".into()], ..Default::default() };
        assert!(generate_world(&clash).is_err());
    }
}
