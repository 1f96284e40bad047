//! Rollouts under the model, the expert oracle, or a uniform random policy.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::agent::Agent;
use crate::error::Result;
use crate::metrics::{aggregate, score_episode, EpisodeResult, Report};
use crate::params::Session;
use crate::reasoning::{sample_index, select_index, ActionDistribution, SelectMode};
use crate::rng::{mix, seeded};
use crate::training::losses::observation_seed;
use crate::world::{render_observation, Action, Dataset, Episode, ExpertPolicy, Split, HORIZON, VIEWS};

#[derive(Clone, Copy, Debug)]
pub enum Policy<'a> {
    Model(&'a Agent),
    Expert,
    Random(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub node: usize,
    pub candidates: Vec<usize>,
    /// Candidates then STOP.
    pub probs: Vec<f64>,
    pub action: Action,
    pub eta: Vec<f64>,
    pub stop_prob: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub episode: usize,
    pub steps: Vec<StepRecord>,
    /// Visited nodes, start first.
    pub nodes: Vec<usize>,
    /// Object index chosen at the final node when the agent stopped there.
    pub grounded: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSettings {
    pub obs_sigma: f64,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { obs_sigma: 0.05, seed: 0 }
    }
}

fn point_mass(n: usize, at: usize) -> Vec<f64> {
    let mut p = vec![0.0; n];
    p[at] = 1.0;
    p
}

/// Runs one episode. At most `HORIZON` decisions are made; the episode ends
/// on STOP or when the horizon is used up.
pub fn run_episode(policy: Policy, dataset: &Dataset, episode: &Episode, settings: &EvalSettings) -> Result<Trajectory> {
    let world = dataset.world_of(episode);
    let vocab = &dataset.vocab;
    let expert = ExpertPolicy::new(world, episode.goal);
    let mut rng = seeded(mix(settings.seed, 0xAA + episode.id as u64));
    let mut session = match policy {
        Policy::Model(a) => Some(Session::inference(&a.store)),
        _ => None,
    };
    let mut state = match (policy, session.as_mut()) {
        (Policy::Model(a), Some(s)) => Some(a.begin(s, &episode.instruction)?),
        _ => None,
    };
    let mut node = episode.start;
    let mut traj = Trajectory {
        episode: episode.id,
        steps: Vec::new(),
        nodes: vec![node],
        grounded: None,
    };
    for t in 0..HORIZON {
        let obs = render_observation(world, vocab, node, observation_seed(settings.seed ^ 0xE7A1, episode.id, node, t), settings.obs_sigma);
        let candidates: Vec<usize> = obs.candidates.iter().map(|c| c.node).collect();
        let n = candidates.len() + 1;
        let uniform_eta = vec![1.0 / VIEWS as f64; VIEWS];
        let (dist, index, grounding) = match (policy, session.as_mut(), state.as_mut()) {
            (Policy::Model(agent), Some(s), Some(st)) => {
                let out = agent.step(s, st, &obs, &[])?;
                let dist = agent.distribution(s, &out, &obs);
                let index = select_index(&dist, SelectMode::Greedy);
                let g = if index == candidates.len() { agent.ground(s, &out)? } else { None };
                st.advance(&out);
                (dist, index, g)
            }
            (Policy::Expert, ..) => {
                let a = expert.action(node);
                let index = match a {
                    Action::Stop => candidates.len(),
                    Action::Move(m) => candidates.iter().position(|&c| c == m).expect("expert move is a candidate"),
                };
                let dist = ActionDistribution {
                    candidates: candidates.clone(),
                    logits: vec![0.0; n],
                    probs: point_mass(n, index),
                    eta: uniform_eta,
                };
                let g = (a == Action::Stop && node == episode.goal).then_some(episode.target_object);
                (dist, index, g)
            }
            _ => {
                let probs = vec![1.0 / n as f64; n];
                let index = sample_index(&probs, &mut rng);
                let objects = world.objects(node).len();
                let g = (index == candidates.len() && objects > 0).then(|| rng.random_range(0..objects));
                let dist = ActionDistribution {
                    candidates: candidates.clone(),
                    logits: vec![0.0; n],
                    probs,
                    eta: uniform_eta,
                };
                (dist, index, g)
            }
        };
        let action = dist.action(index);
        traj.steps.push(StepRecord {
            episode: episode.id,
            step: t,
            node,
            candidates,
            stop_prob: dist.stop_probability(),
            probs: dist.probs,
            action,
            eta: dist.eta,
        });
        match action {
            Action::Stop => {
                traj.grounded = grounding;
                break;
            }
            Action::Move(m) => {
                node = m;
                traj.nodes.push(m);
            }
        }
    }
    Ok(traj)
}

pub fn score(dataset: &Dataset, episode: &Episode, traj: &Trajectory) -> Result<EpisodeResult> {
    score_episode(dataset.world_of(episode), episode, &traj.nodes, traj.grounded)
}

pub struct Evaluation {
    pub trajectories: Vec<Trajectory>,
    pub results: Vec<EpisodeResult>,
    pub report: Report,
}

pub fn evaluate(policy: Policy, dataset: &Dataset, split: Split, settings: &EvalSettings) -> Result<Evaluation> {
    let mut trajectories = Vec::new();
    let mut results = Vec::new();
    for e in dataset.split(split) {
        let t = run_episode(policy, dataset, e, settings)?;
        results.push(score(dataset, e, &t)?);
        trajectories.push(t);
    }
    let report = aggregate(&results)?;
    Ok(Evaluation {
        trajectories,
        results,
        report,
    })
}
