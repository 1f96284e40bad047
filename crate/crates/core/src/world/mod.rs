//! Synthetic topological worlds, instructions, panoramas and the expert.

pub mod dataset;
pub mod episode;
pub mod expert;
pub mod graph;
pub mod observation;
pub mod vocab;

pub use dataset::{build_dataset, Dataset, DatasetConfig, InstructionMix};
pub use episode::{generate_episode, instruction_for, Episode, InstructionKind, Split, HORIZON, MAX_INSTRUCTION_TOKENS};
pub use expert::{expert_action, Action, ExpertPolicy};
pub use graph::{
    bearing_sector, generate_graph, generate_world, view_index, Candidate, Edge, NavGraph, Node, ObjectInstance,
    WorldConfig, CANDIDATE_ELEVATION, ELEVATIONS, MAX_DEGREE, VIEWS,
};
pub use observation::{orientation_embedding, render_observation, ObservedObject, PanoramicObservation, ORIENTATION_DIM};
pub use vocab::{Concept, ConceptKind, ConceptVocabulary, VocabSizes, CLS, FEATURE_DIM, HEADINGS, LATENT_DIM, MASK, PAD};

#[cfg(test)]
mod tests;
