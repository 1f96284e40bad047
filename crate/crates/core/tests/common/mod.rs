#![allow(dead_code)]

use navfuse_core::agent::{Agent, ModelConfig};
use navfuse_core::numerics::{relative_error, GradCheckReport};
use navfuse_core::params::{ParamId, ParamStore, Session};
use navfuse_core::world::*;
use navfuse_core::Result;

pub fn tiny_config(n: usize) -> WorldConfig {
    WorldConfig { n_nodes: n, ..WorldConfig::default() }
}

/// Episode from `start` to `goal` built directly from the shortest path, so
/// that tiny worlds with short paths are usable.
pub fn manual_episode(world: &NavGraph, vocab: &ConceptVocabulary, start: usize, goal: usize, kind: InstructionKind) -> Option<Episode> {
    if world.objects(goal).is_empty() || start == goal {
        return None;
    }
    let (_, path) = world.shortest_path(start, goal);
    let target_object = 0;
    let concept = world.objects(goal)[target_object].concept;
    let instruction = instruction_for(world, vocab, &path, concept, kind).ok()?;
    Some(Episode {
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

/// A world of `n` nodes with an episode whose path has at least one edge.
pub fn tiny_setup(seed: u64, n: usize) -> (NavGraph, ConceptVocabulary, Episode) {
    let (w, v) = generate_world(seed, &tiny_config(n)).unwrap();
    for goal in (0..n).rev() {
        for start in 0..n {
            if let Some(e) = manual_episode(&w, &v, start, goal, InstructionKind::Stepwise) {
                return (w, v, e);
            }
        }
    }
    panic!("no episode in tiny world");
}

pub fn tiny_dataset(seed: u64, n: usize) -> (Dataset, Episode) {
    let (w, v, e) = tiny_setup(seed, n);
    let d = Dataset {
        world_config: tiny_config(n),
        vocab: v,
        worlds: vec![w],
        unseen: vec![false],
        episodes: vec![e.clone()],
    };
    (d, e)
}

/// Agent whose zero-initialised projections are replaced by small random
/// values so every branch carries gradient.
pub fn randomised_agent(config: ModelConfig, vocab: &ConceptVocabulary, seed: u64) -> Agent {
    let mut agent = Agent::new(config, vocab);
    let mut rng = navfuse_core::rng::seeded(seed);
    for p in agent.fusion.residual_projections().iter().chain([agent.mlm_fusion.out].iter()) {
        let shape = agent.store.get(p.w).shape().to_vec();
        *agent.store.get_mut(p.w) = navfuse_core::rng::uniform_tensor(&mut rng, &shape, -0.1, 0.1);
    }
    agent
}

/// Central finite differences of `loss` with respect to selected scalar
/// components of parameter `id`, compared against the tape gradient.
pub fn param_fd<F>(agent: &Agent, id: ParamId, components: &[usize], eps: f64, loss: F) -> GradCheckReport
where
    F: Fn(&Agent, &mut Session) -> Result<navfuse_core::numerics::Var>,
{
    let mut s = Session::training(&agent.store);
    let l = loss(agent, &mut s).unwrap();
    let g = s.backward(l).unwrap();
    let zero = navfuse_core::numerics::Tensor::zeros(agent.store.get(id).shape());
    let gt = g.get(id).cloned().unwrap_or(zero);
    let mut probe = agent.clone();
    let mut report = GradCheckReport { analytic: vec![], numeric: vec![], errors: vec![], kinked: vec![] };
    for &c in components {
        let orig = probe.store.get(id).data()[c];
        let eval = |a: &Agent| {
            let mut s = Session::inference(&a.store);
            let v = loss(a, &mut s).unwrap();
            (s.value(v).item(), s.tape.activation_pattern())
        };
        probe.store.get_mut(id).data_mut()[c] = orig + eps;
        let (plus, above) = eval(&probe);
        probe.store.get_mut(id).data_mut()[c] = orig - eps;
        let (minus, below) = eval(&probe);
        probe.store.get_mut(id).data_mut()[c] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        report.errors.push(relative_error(gt.data()[c], numeric));
        report.analytic.push(gt.data()[c]);
        report.numeric.push(numeric);
        report.kinked.push(above != below);
    }
    report
}

pub fn trainable_ids(store: &ParamStore) -> Vec<ParamId> {
    (0..store.len()).map(ParamId).filter(|&i| store.entries()[i.0].trainable).collect()
}

pub fn default_agent(vocab: &ConceptVocabulary) -> Agent {
    Agent::new(ModelConfig::default(), vocab)
}

/// Runs `f` on a session whose tape is `tape`, so tape-level gradient checks
/// can drive model code.
pub fn on_tape<F>(store: &ParamStore, tape: &mut navfuse_core::numerics::Tape, f: F) -> Result<navfuse_core::numerics::Var>
where
    F: FnOnce(&mut Session) -> Result<navfuse_core::numerics::Var>,
{
    let mut s = Session::inference(store);
    std::mem::swap(&mut s.tape, tape);
    let r = f(&mut s);
    std::mem::swap(&mut s.tape, tape);
    r
}

/// Session bound to `tape` with parameter `id` replaced by `v`.
pub fn on_tape_with<F>(store: &ParamStore, tape: &mut navfuse_core::numerics::Tape, id: ParamId, v: navfuse_core::numerics::Var, f: F) -> Result<navfuse_core::numerics::Var>
where
    F: FnOnce(&mut Session) -> Result<navfuse_core::numerics::Var>,
{
    on_tape(store, tape, |s| {
        s.bind(id, v);
        f(s)
    })
}


/// `Σ v ⊙ R` for a fixed random weight `R ~ U(-1, 1)`; keeps the
/// loss near zero so finite differences are not swamped by rounding in `f`.
pub fn probe_sum(s: &mut Session, v: navfuse_core::numerics::Var) -> Result<navfuse_core::numerics::Var> {
    let shape = s.value(v).shape().to_vec();
    let r = navfuse_core::rng::uniform_tensor(&mut navfuse_core::rng::seeded(0x5eed), &shape, -1.0, 1.0);
    let r = s.constant(r);
    let y = s.tape.mul(v, r)?;
    Ok(s.tape.sum(y))
}
