use alloc::format;
use alloc::vec::Vec;

use super::episode::{generate_episode, Episode, InstructionKind, Split};
use super::graph::{generate_graph, NavGraph, WorldConfig};
use super::vocab::ConceptVocabulary;
use crate::error::{Error, Result};
use crate::rng::mix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InstructionMix {
    Stepwise,
    GoalOriented,
    /// Alternates by episode index, stepwise first.
    Alternating,
}

impl InstructionMix {
    pub fn kind_for(self, index: usize) -> InstructionKind {
        match self {
            InstructionMix::Stepwise => InstructionKind::Stepwise,
            InstructionMix::GoalOriented => InstructionKind::GoalOriented,
            InstructionMix::Alternating if index % 2 == 0 => InstructionKind::Stepwise,
            InstructionMix::Alternating => InstructionKind::GoalOriented,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub seed: u64,
    pub world: WorldConfig,
    /// Worlds shared by train and val_seen.
    pub seen_worlds: usize,
    /// Worlds reserved for val_unseen.
    pub unseen_worlds: usize,
    /// Total episodes over all splits.
    pub episodes: usize,
    pub val_seen_fraction: f64,
    pub val_unseen_fraction: f64,
    pub instructions: InstructionMix,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            seed: 0,
            world: WorldConfig::default(),
            seen_worlds: 20,
            unseen_worlds: 5,
            episodes: 300,
            val_seen_fraction: 1.0 / 6.0,
            val_unseen_fraction: 1.0 / 6.0,
            instructions: InstructionMix::Stepwise,
        }
    }
}

impl DatasetConfig {
    /// (train, val_seen, val_unseen) counts; validation splits take the floor.
    pub fn split_counts(&self) -> (usize, usize, usize) {
        let e = self.episodes as f64;
        let vs = libm::floor(e * self.val_seen_fraction) as usize;
        let vu = libm::floor(e * self.val_unseen_fraction) as usize;
        (self.episodes - vs - vu, vs, vu)
    }
}

/// A family of worlds over one vocabulary plus their split-tagged episodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub world_config: WorldConfig,
    pub vocab: ConceptVocabulary,
    pub worlds: Vec<NavGraph>,
    /// Which worlds are unseen during training.
    pub unseen: Vec<bool>,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> Vec<&Episode> {
        self.episodes.iter().filter(|e| e.split == split).collect()
    }

    pub fn world_of(&self, episode: &Episode) -> &NavGraph {
        &self.worlds[episode.world]
    }

    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.episodes.iter().enumerate() {
            let world = self
                .worlds
                .get(e.world)
                .ok_or_else(|| Error::Contract(format!("episode {i} references world {}", e.world)))?;
            if world.seed != e.world_seed {
                return Err(Error::Contract(format!("episode {i} world seed mismatch")));
            }
            if self.unseen[e.world] != (e.split == Split::ValUnseen) {
                return Err(Error::Contract(format!("episode {i} split does not match its world")));
            }
            e.validate(world, &self.vocab)?;
        }
        Ok(())
    }
}

pub fn seen_world_seed(seed: u64, index: usize) -> u64 {
    mix(seed, 0x5EE0_0000_0000 + index as u64)
}

pub fn unseen_world_seed(seed: u64, index: usize) -> u64 {
    mix(seed, 0xFEE0_0000_0000 + index as u64)
}

pub fn build_dataset(config: &DatasetConfig) -> Result<Dataset> {
    let (n_train, n_seen, n_unseen) = config.split_counts();
    if config.seen_worlds == 0 && n_train + n_seen > 0 {
        return Err(Error::Argument("train and val_seen episodes need at least one seen world".into()));
    }
    if config.unseen_worlds == 0 && n_unseen > 0 {
        return Err(Error::Argument("val_unseen episodes need at least one unseen world".into()));
    }
    let vocab = ConceptVocabulary::generate(config.world.vocab_sizes, config.world.vocab_seed, config.world.word_noise)?;
    let mut worlds = Vec::new();
    let mut unseen = Vec::new();
    for i in 0..config.seen_worlds {
        worlds.push(generate_graph(seen_world_seed(config.seed, i), &config.world, &vocab)?);
        unseen.push(false);
    }
    for i in 0..config.unseen_worlds {
        let s = unseen_world_seed(config.seed, i);
        if worlds.iter().any(|w| w.seed == s) {
            return Err(Error::Generation("unseen world seed collides with a seen world".into()));
        }
        worlds.push(generate_graph(s, &config.world, &vocab)?);
        unseen.push(true);
    }

    let mut episodes = Vec::with_capacity(config.episodes);
    let mut used: Vec<Vec<(usize, usize)>> = alloc::vec![Vec::new(); worlds.len()];
    let mut push = |split: Split, world: usize, k: usize, episodes: &mut Vec<Episode>| -> Result<()> {
        let id = episodes.len();
        let g = &worlds[world];
        let exclude: &[(usize, usize)] = if split == Split::ValSeen { &used[world] } else { &[] };
        let mut e = generate_episode(g, &vocab, mix(g.seed, 0xE915 + id as u64), config.instructions.kind_for(k), exclude)?;
        e.id = id;
        e.world = world;
        e.split = split;
        if split == Split::Train {
            used[world].push((e.start, e.goal));
        }
        episodes.push(e);
        Ok(())
    };
    for k in 0..n_train {
        push(Split::Train, k % config.seen_worlds, k, &mut episodes)?;
    }
    for k in 0..n_seen {
        push(Split::ValSeen, k % config.seen_worlds, k, &mut episodes)?;
    }
    for k in 0..n_unseen {
        push(Split::ValUnseen, config.seen_worlds + k % config.unseen_worlds, k, &mut episodes)?;
    }
    Ok(Dataset {
        world_config: config.world.clone(),
        vocab,
        worlds,
        unseen,
        episodes,
    })
}
