use alloc::vec::Vec;

use rand::seq::index::sample;

use crate::agent::{Agent, EpisodeState, StepOutput};
use crate::error::{Error, Result};
use crate::fusion::Context;
use crate::numerics::{Tensor, Var};
use crate::params::Session;
use crate::reasoning::{sample_index, softmax_vec};
use crate::rng::{mix, seeded};
use crate::world::{render_observation, Action, ConceptVocabulary, Episode, ExpertPolicy, NavGraph, PanoramicObservation, HORIZON, MASK, VIEWS};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub mlm: f64,
    pub mvc: f64,
    pub og: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            mlm: 1.0,
            mvc: 0.5,
            og: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub nav: f64,
    pub mlm: f64,
    pub mvc: f64,
    pub og: f64,
    pub total: f64,
    pub weights: LossWeights,
}

impl LossBreakdown {
    pub fn combine(nav: f64, mlm: f64, mvc: f64, og: f64, weights: LossWeights) -> Self {
        let total = nav + weights.mlm * mlm + weights.mvc * mvc + weights.og * og;
        LossBreakdown {
            nav,
            mlm,
            mvc,
            og,
            total,
            weights,
        }
    }
}

/// Number of positions masked out of `n` at `rate`, never below one.
pub fn mask_count(n: usize, rate: f64) -> usize {
    (libm::round(n as f64 * rate) as usize).clamp(1, n.max(1))
}

/// Sorted positions to mask.
pub fn mask_positions(n: usize, rate: f64, seed: u64) -> Vec<usize> {
    let mut rng = seeded(seed);
    let mut v = sample(&mut rng, n, mask_count(n, rate)).into_vec();
    v.sort_unstable();
    v
}

/// Inputs that fix every random choice inside one episode's loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSettings {
    pub weights: LossWeights,
    pub mlm_rate: f64,
    pub mvc_rate: f64,
    pub obs_sigma: f64,
    pub teacher_forcing: bool,
    /// Base seed for observation noise, masks and student-forcing draws.
    pub seed: u64,
}

impl Default for LossSettings {
    fn default() -> Self {
        LossSettings {
            weights: LossWeights::default(),
            mlm_rate: 0.15,
            mvc_rate: 0.25,
            obs_sigma: 0.05,
            teacher_forcing: true,
            seed: 0,
        }
    }
}

/// A rollout with expert labels at every visited node.
pub struct Rollout {
    pub state: EpisodeState,
    /// State before each step.
    pub states: Vec<EpisodeState>,
    pub observations: Vec<PanoramicObservation>,
    pub steps: Vec<StepOutput>,
    pub targets: Vec<usize>,
    pub visited: Vec<usize>,
}

pub fn observation_seed(seed: u64, episode: usize, node: usize, step: usize) -> u64 {
    mix(mix(mix(seed, episode as u64), node as u64), step as u64)
}

/// Rolls out with expert labels. Under teacher forcing the expert action is
/// taken; otherwise the next move is drawn from the policy. Stops at the
/// expert's STOP label (teacher forcing) or after the horizon.
pub fn rollout(s: &mut Session, agent: &Agent, world: &NavGraph, vocab: &ConceptVocabulary, episode: &Episode, settings: &LossSettings) -> Result<Rollout> {
    let expert = ExpertPolicy::new(world, episode.goal);
    let mut state = agent.begin(s, &episode.instruction)?;
    let mut r = Rollout {
        state: state.clone(),
        states: Vec::new(),
        observations: Vec::new(),
        steps: Vec::new(),
        targets: Vec::new(),
        visited: Vec::new(),
    };
    let mut rng = seeded(mix(settings.seed, 0x5707 + episode.id as u64));
    let mut node = episode.start;
    for t in 0..=HORIZON {
        let obs = render_observation(world, vocab, node, observation_seed(settings.seed, episode.id, node, t), settings.obs_sigma);
        let out = agent.step(s, &state, &obs, &[])?;
        let label = expert.action(node);
        let target = match label {
            Action::Stop => obs.candidates.len(),
            Action::Move(n) => obs
                .candidates
                .iter()
                .position(|c| c.node == n)
                .ok_or_else(|| Error::Contract("expert move is not a candidate".into()))?,
        };
        let chosen = if settings.teacher_forcing {
            target
        } else {
            sample_index(&softmax_vec(s.value(out.logits).data()), &mut rng)
        };
        r.states.push(state.clone());
        state.advance(&out);
        r.visited.push(node);
        r.targets.push(target);
        r.observations.push(obs);
        r.steps.push(out);
        if chosen == r.observations.last().unwrap().candidates.len() || t == HORIZON {
            break;
        }
        node = r.observations.last().unwrap().candidates[chosen].node;
    }
    r.state = state;
    Ok(r)
}

/// Sum of per-step cross-entropies against the expert labels.
pub fn nav_term(s: &mut Session, r: &Rollout) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (out, &target) in r.steps.iter().zip(&r.targets) {
        let ce = s.tape.cross_entropy(out.logits, target)?;
        total = Some(match total {
            None => ce,
            Some(t) => s.tape.add(t, ce)?,
        });
    }
    total.ok_or_else(|| Error::Contract("empty rollout".into()))
}

fn mean_ce(s: &mut Session, logits: Var, targets: &[usize]) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (i, &t) in targets.iter().enumerate() {
        let row = s.tape.narrow(logits, 0, i, 1)?;
        let ce = s.tape.cross_entropy(row, t)?;
        total = Some(match total {
            None => ce,
            Some(acc) => s.tape.add(acc, ce)?,
        });
    }
    let total = total.ok_or_else(|| Error::Contract("no masked positions".into()))?;
    Ok(s.tape.scale(total, 1.0 / targets.len() as f64))
}

/// Masked-token reconstruction against the fused visual context `z_fused`.
pub fn mlm_term(s: &mut Session, agent: &Agent, tokens: &[usize], z_fused: Var, rate: f64, seed: u64) -> Result<Var> {
    if tokens.is_empty() {
        return Err(Error::Argument("masked language modelling needs at least one token".into()));
    }
    let positions = mask_positions(tokens.len(), rate, seed);
    let mut masked = tokens.to_vec();
    for &p in &positions {
        masked[p] = MASK;
    }
    let enc = agent.lang.encode(s, &masked)?;
    // +1 skips [CLS]
    let rows: Vec<usize> = positions.iter().map(|p| p + 1).collect();
    let r = s.tape.gather_rows(enc.tokens, &rows)?;
    let ctx = Context::all_valid(s, z_fused);
    let r = agent.mlm_fusion.forward(s, r, Some(&ctx))?;
    let logits = agent.mlm_head.forward(s, r)?;
    let targets: Vec<usize> = positions.iter().map(|&p| tokens[p]).collect();
    mean_ce(s, logits, &targets)
}

/// Masked-view classification at one observation, conditioned on `state`.
pub fn mvc_term(s: &mut Session, agent: &Agent, state: &EpisodeState, obs: &PanoramicObservation, rate: f64, seed: u64) -> Result<Var> {
    let masked = mask_positions(VIEWS, rate, seed);
    let out = agent.step(s, state, obs, &masked)?;
    let rows = s.tape.gather_rows(out.z_fused, &masked)?;
    let logits = agent.mvc_head.forward(s, rows)?;
    let targets: Vec<usize> = masked.iter().map(|&m| obs.view_concepts[m]).collect();
    mean_ce(s, logits, &targets)
}

/// Object grounding at the final step; `None` when that node has no objects.
pub fn og_term(s: &mut Session, agent: &Agent, last: &StepOutput, target: usize) -> Result<Option<Var>> {
    let Some(o) = last.objects else { return Ok(None) };
    let l = agent.grounding_logits(s, o, last.z_final)?;
    Ok(Some(s.tape.cross_entropy(l, target)?))
}

/// All four terms of one episode on a shared tape.
pub struct EpisodeLoss {
    pub nav: Var,
    pub mlm: Var,
    pub mvc: Var,
    pub og: Var,
    pub total: Var,
    pub auxiliary: Var,
    pub breakdown: LossBreakdown,
    pub og_skipped: bool,
    pub visited: Vec<usize>,
}

pub fn episode_loss(s: &mut Session, agent: &Agent, world: &NavGraph, vocab: &ConceptVocabulary, episode: &Episode, settings: &LossSettings) -> Result<EpisodeLoss> {
    let r = rollout(s, agent, world, vocab, episode, settings)?;
    let nav = nav_term(s, &r)?;
    let mlm = mlm_term(s, agent, &episode.instruction, r.steps[0].z_fused, settings.mlm_rate, mix(settings.seed, 0x313 + episode.id as u64))?;
    let pick = (mix(settings.seed, 0x3c + episode.id as u64) % r.steps.len() as u64) as usize;
    let mvc = mvc_term(s, agent, &r.states[pick], &r.observations[pick], settings.mvc_rate, mix(settings.seed, 0x3c3 + episode.id as u64))?;
    let last = r.steps.last().expect("nonempty rollout");
    // grounding is defined for the goal node only
    let at_goal = *r.visited.last().unwrap() == episode.goal;
    let og = if at_goal { og_term(s, agent, last, episode.target_object)? } else { None };
    let og_skipped = og.is_none();
    let og = og.unwrap_or_else(|| s.constant(Tensor::scalar(0.0)));

    let w = settings.weights;
    let wm = s.tape.scale(mlm, w.mlm);
    let wv = s.tape.scale(mvc, w.mvc);
    let wo = s.tape.scale(og, w.og);
    let t = s.tape.add(nav, wm)?;
    let t = s.tape.add(t, wv)?;
    let total = s.tape.add(t, wo)?;
    let a = s.tape.add(wm, wv)?;
    let auxiliary = s.tape.add(a, wo)?;

    let val = |v: Var| s.value(v).item();
    let breakdown = LossBreakdown::combine(val(nav), val(mlm), val(mvc), val(og), w);
    Ok(EpisodeLoss {
        nav,
        mlm,
        mvc,
        og,
        total,
        auxiliary,
        breakdown,
        og_skipped,
        visited: r.visited,
    })
}
