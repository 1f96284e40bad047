use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::graph::NavGraph;
use super::vocab::ConceptVocabulary;
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const MAX_INSTRUCTION_TOKENS: usize = 24;
pub const MIN_PATH_EDGES: usize = 2;
pub const MAX_PATH_EDGES: usize = 8;
/// Evaluation rollouts stop after this many moves.
pub const HORIZON: usize = 15;
const SAMPLE_ATTEMPTS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InstructionKind {
    /// One "go <direction>" clause per expert edge, then "stop at the <object>".
    Stepwise,
    /// "find the <object> in the <room>".
    GoalOriented,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    ValSeen,
    ValUnseen,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::ValSeen => "val_seen",
            Split::ValUnseen => "val_unseen",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val_seen" => Some(Split::ValSeen),
            "val_unseen" => Some(Split::ValUnseen),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub id: usize,
    /// Index of the world this episode lives in.
    pub world: usize,
    pub world_seed: u64,
    pub start: usize,
    pub goal: usize,
    /// Index into `objects(goal)`.
    pub target_object: usize,
    pub instruction: Vec<usize>,
    pub expert_path: Vec<usize>,
    pub split: Split,
    pub kind: InstructionKind,
}

impl Episode {
    pub fn path_edges(&self) -> usize {
        self.expert_path.len() - 1
    }

    /// Checks the episode against its world and vocabulary.
    pub fn validate(&self, world: &NavGraph, vocab: &ConceptVocabulary) -> Result<()> {
        let n = world.node_count();
        if self.start >= n || self.goal >= n {
            return Err(Error::Contract(format!("episode {} references a missing node", self.id)));
        }
        if self.target_object >= world.objects(self.goal).len() {
            return Err(Error::Contract(format!("episode {} target object is not at the goal", self.id)));
        }
        if self.instruction.is_empty() || self.instruction.len() > MAX_INSTRUCTION_TOKENS {
            return Err(Error::Contract(format!("episode {} instruction length {}", self.id, self.instruction.len())));
        }
        if let Some(&t) = self.instruction.iter().find(|&&t| t >= vocab.token_count()) {
            return Err(Error::Vocabulary(format!("token {t} out of range")));
        }
        let (dist, path) = world.shortest_path(self.start, self.goal);
        let len: f64 = self
            .expert_path
            .windows(2)
            .map(|w| world.edge_length(w[0], w[1]).unwrap_or(f64::NAN))
            .sum();
        if self.expert_path.first() != Some(&self.start)
            || self.expert_path.last() != Some(&self.goal)
            || !(libm::fabs(len - dist) <= 1e-9 * dist.max(1.0))
            || path.len() != self.expert_path.len()
        {
            return Err(Error::Contract(format!("episode {} expert path is not a shortest path", self.id)));
        }
        Ok(())
    }
}

/// Builds the instruction for a path and target object.
pub fn instruction_for(
    world: &NavGraph,
    vocab: &ConceptVocabulary,
    path: &[usize],
    goal_object: usize,
    kind: InstructionKind,
) -> Result<Vec<usize>> {
    let word = |name: &str| vocab.token(name);
    let object = vocab.token_for_concept(vocab.object_concept(goal_object));
    let mut tokens = Vec::new();
    match kind {
        InstructionKind::Stepwise => {
            for w in path.windows(2) {
                tokens.push(word("go")?);
                tokens.push(vocab.token_for_concept(vocab.direction_concept(world.heading_to(w[0], w[1]))));
            }
            tokens.extend([word("stop")?, word("at")?, word("the")?, object]);
        }
        InstructionKind::GoalOriented => {
            let goal = *path.last().unwrap();
            let room = vocab.token_for_concept(vocab.room_concept(world.node(goal).room));
            tokens.extend([word("find")?, word("the")?, object, word("in")?, word("the")?, room]);
        }
    }
    if tokens.len() > MAX_INSTRUCTION_TOKENS {
        return Err(Error::Contract(format!("instruction of {} tokens exceeds the limit", tokens.len())));
    }
    Ok(tokens)
}

/// Samples a start/goal pair whose expert path has 2–8 edges and whose goal
/// hosts at least one object. `exclude` lists (start, goal) pairs to avoid.
pub fn generate_episode(
    world: &NavGraph,
    vocab: &ConceptVocabulary,
    seed: u64,
    kind: InstructionKind,
    exclude: &[(usize, usize)],
) -> Result<Episode> {
    let mut rng = seeded(seed);
    let n = world.node_count();
    for _ in 0..SAMPLE_ATTEMPTS {
        let start = rng.random_range(0..n);
        let goal = rng.random_range(0..n);
        if start == goal || world.objects(goal).is_empty() || exclude.contains(&(start, goal)) {
            continue;
        }
        let (_, path) = world.shortest_path(start, goal);
        let edges = path.len() - 1;
        if !(MIN_PATH_EDGES..=MAX_PATH_EDGES).contains(&edges) {
            continue;
        }
        let target_object = rng.random_range(0..world.objects(goal).len());
        let concept = world.objects(goal)[target_object].concept;
        let instruction = instruction_for(world, vocab, &path, concept, kind)?;
        return Ok(Episode {
            id: 0,
            world: 0,
            world_seed: world.seed,
            start,
            goal,
            target_object,
            instruction,
            expert_path: path,
            split: Split::Train,
            kind,
        });
    }
    // Worlds too small for a two-edge shortest path (e.g. two nodes) fall back
    // to the longest available path, chosen uniformly among ties. Such worlds
    // have so few pairs that `exclude` is dropped when it would leave none.
    let longest = |honour_exclude: bool| {
        let mut best: Vec<(usize, usize)> = Vec::new();
        let mut best_edges = 0;
        for start in 0..n {
            for goal in 0..n {
                if start == goal || world.objects(goal).is_empty() || (honour_exclude && exclude.contains(&(start, goal))) {
                    continue;
                }
                let edges = world.shortest_path(start, goal).1.len() - 1;
                if edges > MAX_PATH_EDGES || edges < best_edges {
                    continue;
                }
                if edges > best_edges {
                    best.clear();
                    best_edges = edges;
                }
                best.push((start, goal));
            }
        }
        (best, best_edges)
    };
    let (mut best, mut best_edges) = longest(true);
    if best.is_empty() {
        (best, best_edges) = longest(false);
    }
    if best_edges >= MIN_PATH_EDGES || best.is_empty() {
        return Err(Error::Generation(format!(
            "no start/goal pair with a {MIN_PATH_EDGES}-{MAX_PATH_EDGES} edge path after {SAMPLE_ATTEMPTS} draws"
        )));
    }
    let (start, goal) = best[rng.random_range(0..best.len())];
    let path = world.shortest_path(start, goal).1;
    let target_object = rng.random_range(0..world.objects(goal).len());
    let concept = world.objects(goal)[target_object].concept;
    let instruction = instruction_for(world, vocab, &path, concept, kind)?;
    Ok(Episode {
        id: 0,
        world: 0,
        world_seed: world.seed,
        start,
        goal,
        target_object,
        instruction,
        expert_path: path,
        split: Split::Train,
        kind,
    })
}
