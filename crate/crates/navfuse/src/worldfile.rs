//! JSON interchange for a dataset: vocabulary, graphs and split-tagged episodes.
//!
//! The file carries everything needed to rebuild the dataset bit for bit, so
//! train and evaluate never regenerate worlds from seeds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use navfuse_core::world::{
    Concept, ConceptKind, ConceptVocabulary, Dataset, Edge, Episode, InstructionKind, NavGraph, Node,
    ObjectInstance, Split, VocabSizes, WorldConfig,
};

use crate::error::{self, Error, Result};

pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub version: u32,
    pub world: WorldSection,
    pub episodes: Vec<EpisodeRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSection {
    pub config: WorldConfigRecord,
    pub vocabulary: VocabRecord,
    pub graphs: Vec<GraphRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfigRecord {
    pub n_nodes: usize,
    pub area_m: f64,
    pub n_objects: usize,
    pub room_concepts: usize,
    pub object_concepts: usize,
    pub vocab_seed: u64,
    pub rooms_per_world: usize,
    pub mean_edge_m: f64,
    pub word_noise: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptRecord {
    pub kind: String,
    pub name: String,
    pub latent: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabRecord {
    pub seed: u64,
    pub concepts: Vec<ConceptRecord>,
    pub tokens: Vec<String>,
    pub word_embeddings: Vec<Vec<f64>>,
    pub lift: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub id: usize,
    pub position: [f64; 2],
    pub room: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeRecord {
    pub a: usize,
    pub b: usize,
    pub length: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectRecord {
    pub concept: usize,
    pub heading: u8,
    pub elevation: u8,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub seed: u64,
    pub unseen: bool,
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    /// Per node.
    pub objects: Vec<Vec<ObjectRecord>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub id: usize,
    pub split: String,
    pub world: usize,
    pub world_seed: u64,
    pub start: usize,
    pub goal: usize,
    pub target_object: usize,
    pub kind: String,
    pub instruction: Vec<usize>,
    /// Readable rendering of `instruction`; ignored on load.
    pub text: String,
    pub expert_path: Vec<usize>,
}

fn kind_name(k: ConceptKind) -> &'static str {
    match k {
        ConceptKind::Room => "room",
        ConceptKind::Object => "object",
        ConceptKind::Direction => "direction",
    }
}

fn instruction_name(k: InstructionKind) -> &'static str {
    match k {
        InstructionKind::Stepwise => "stepwise",
        InstructionKind::GoalOriented => "goal_oriented",
    }
}

impl WorldFile {
    pub fn from_dataset(d: &Dataset) -> Self {
        let c = &d.world_config;
        let config = WorldConfigRecord {
            n_nodes: c.n_nodes,
            area_m: c.area_m,
            n_objects: c.n_objects,
            room_concepts: c.vocab_sizes.rooms,
            object_concepts: c.vocab_sizes.objects,
            vocab_seed: c.vocab_seed,
            rooms_per_world: c.rooms_per_world,
            mean_edge_m: c.mean_edge_m,
            word_noise: c.word_noise,
        };
        let v = &d.vocab;
        let vocabulary = VocabRecord {
            seed: v.seed,
            concepts: v
                .concepts()
                .iter()
                .map(|c| ConceptRecord {
                    kind: kind_name(c.kind).into(),
                    name: c.name.clone(),
                    latent: c.latent.clone(),
                })
                .collect(),
            tokens: v.tokens().to_vec(),
            word_embeddings: v.word_embeddings().to_vec(),
            lift: v.lift().to_vec(),
        };
        let graphs = d
            .worlds
            .iter()
            .zip(&d.unseen)
            .map(|(g, &unseen)| GraphRecord {
                seed: g.seed,
                unseen,
                nodes: g
                    .nodes()
                    .iter()
                    .map(|n| NodeRecord {
                        id: n.id,
                        position: n.position,
                        room: n.room,
                    })
                    .collect(),
                edges: g
                    .edges()
                    .iter()
                    .map(|e| EdgeRecord {
                        a: e.a,
                        b: e.b,
                        length: e.length,
                    })
                    .collect(),
                objects: g
                    .all_objects()
                    .iter()
                    .map(|os| {
                        os.iter()
                            .map(|o| ObjectRecord {
                                concept: o.concept,
                                heading: o.heading,
                                elevation: o.elevation,
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        let episodes = d
            .episodes
            .iter()
            .map(|e| EpisodeRecord {
                id: e.id,
                split: e.split.as_str().into(),
                world: e.world,
                world_seed: e.world_seed,
                start: e.start,
                goal: e.goal,
                target_object: e.target_object,
                kind: instruction_name(e.kind).into(),
                instruction: e.instruction.clone(),
                text: e
                    .instruction
                    .iter()
                    .map(|&t| d.vocab.token_name(t).unwrap_or("?"))
                    .collect::<Vec<_>>()
                    .join(" "),
                expert_path: e.expert_path.clone(),
            })
            .collect();
        WorldFile {
            version: VERSION,
            world: WorldSection {
                config,
                vocabulary,
                graphs,
            },
            episodes,
        }
    }

    pub fn into_dataset(self) -> Result<Dataset> {
        if self.version != VERSION {
            return Err(Error::Format(format!("unsupported world file version {}", self.version)));
        }
        let c = self.world.config;
        let sizes = VocabSizes {
            rooms: c.room_concepts,
            objects: c.object_concepts,
        };
        let world_config = WorldConfig {
            n_nodes: c.n_nodes,
            area_m: c.area_m,
            n_objects: c.n_objects,
            vocab_sizes: sizes,
            vocab_seed: c.vocab_seed,
            rooms_per_world: c.rooms_per_world,
            mean_edge_m: c.mean_edge_m,
            word_noise: c.word_noise,
        };
        let v = self.world.vocabulary;
        let concepts = v
            .concepts
            .into_iter()
            .map(|c| {
                let kind = match c.kind.as_str() {
                    "room" => ConceptKind::Room,
                    "object" => ConceptKind::Object,
                    "direction" => ConceptKind::Direction,
                    other => return Err(Error::Format(format!("unknown concept kind {other:?}"))),
                };
                Ok(Concept {
                    kind,
                    name: c.name,
                    latent: c.latent,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let vocab = ConceptVocabulary::from_parts(sizes, v.seed, concepts, v.tokens, v.word_embeddings, v.lift)?;
        let mut worlds = Vec::new();
        let mut unseen = Vec::new();
        for g in self.world.graphs {
            let nodes = g
                .nodes
                .into_iter()
                .map(|n| Node {
                    id: n.id,
                    position: n.position,
                    room: n.room,
                })
                .collect();
            let edges = g
                .edges
                .into_iter()
                .map(|e| Edge {
                    a: e.a,
                    b: e.b,
                    length: e.length,
                })
                .collect();
            let objects = g
                .objects
                .into_iter()
                .enumerate()
                .map(|(node, os)| {
                    os.into_iter()
                        .map(|o| ObjectInstance {
                            concept: o.concept,
                            node,
                            heading: o.heading,
                            elevation: o.elevation,
                        })
                        .collect()
                })
                .collect();
            worlds.push(NavGraph::from_parts(g.seed, nodes, edges, objects)?);
            unseen.push(g.unseen);
        }
        let mut episodes = Vec::new();
        for e in self.episodes {
            let split = Split::parse(&e.split).ok_or_else(|| Error::Format(format!("unknown split {:?}", e.split)))?;
            let kind = match e.kind.as_str() {
                "stepwise" => InstructionKind::Stepwise,
                "goal_oriented" => InstructionKind::GoalOriented,
                other => return Err(Error::Format(format!("unknown instruction kind {other:?}"))),
            };
            episodes.push(Episode {
                id: e.id,
                world: e.world,
                world_seed: e.world_seed,
                start: e.start,
                goal: e.goal,
                target_object: e.target_object,
                instruction: e.instruction,
                expert_path: e.expert_path,
                split,
                kind,
            });
        }
        let d = Dataset {
            world_config,
            vocab,
            worlds,
            unseen,
            episodes,
        };
        d.validate()?;
        Ok(d)
    }
}

pub fn to_json(d: &Dataset) -> Result<String> {
    serde_json::to_string_pretty(&WorldFile::from_dataset(d)).map_err(|e| Error::Format(e.to_string()))
}

pub fn from_json(text: &str) -> Result<Dataset> {
    let f: WorldFile = serde_json::from_str(text).map_err(|e| Error::Format(format!("world file: {e}")))?;
    f.into_dataset()
}

pub fn save(path: &Path, d: &Dataset) -> Result<()> {
    let mut s = to_json(d)?;
    s.push('\n');
    error::write(path, s.as_bytes())
}

pub fn load(path: &Path) -> Result<Dataset> {
    let bytes = error::read(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    from_json(text)
}
