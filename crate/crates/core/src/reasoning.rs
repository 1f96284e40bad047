//! Instruction-guided attention over fused tokens, the decision embedding and
//! candidate scoring with a learned stop vector.

use alloc::vec::Vec;

use rand::Rng;

use crate::encoders::D;
use crate::error::{Error, Result};
use crate::numerics::{Tensor, Var};
use crate::params::{Init, Linear, ParamId, ParamStore, Session};
use crate::rng::{seeded, SeededRng};
use crate::world::{Action, Candidate};

/// Probabilities over the candidates (in candidate order) followed by STOP.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution {
    pub candidates: Vec<usize>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    /// Instruction attention over the fused tokens.
    pub eta: Vec<f64>,
}

impl ActionDistribution {
    pub fn stop_probability(&self) -> f64 {
        *self.probs.last().expect("stop entry")
    }

    pub fn action(&self, index: usize) -> Action {
        if index == self.candidates.len() {
            Action::Stop
        } else {
            Action::Move(self.candidates[index])
        }
    }

    pub fn index_of(&self, action: Action) -> Option<usize> {
        match action {
            Action::Stop => Some(self.candidates.len()),
            Action::Move(n) => self.candidates.iter().position(|&c| c == n),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct InstructionAttention {
    pub wr: Linear,
    pub wl: Linear,
    /// Replace `η` by the uniform distribution.
    pub uniform: bool,
}

impl InstructionAttention {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng) -> Self {
        InstructionAttention {
            wr: Linear::new(store, rng, "reason.wr", D, D, false, Init::FanIn),
            wl: Linear::new(store, rng, "reason.wl", D, D, false, Init::FanIn),
            uniform: false,
        }
    }

    /// `(z̄ [1, D], η [1, n])`.
    pub fn forward(&self, s: &mut Session, z: Var, cls: Var) -> Result<(Var, Var)> {
        let n = s.tape.shape(z)[0];
        let eta = if self.uniform {
            s.constant(Tensor::full(&[1, n], 1.0 / n as f64))
        } else {
            let r = self.wr.forward(s, z)?;
            let l = self.wl.forward(s, cls)?;
            let rt = s.tape.transpose(r)?;
            let alpha = s.tape.matmul(l, rt)?;
            let alpha = s.tape.scale(alpha, 1.0 / libm::sqrt(D as f64));
            s.tape.softmax(alpha, 1)?
        };
        Ok((s.tape.matmul(eta, z)?, eta))
    }
}

/// `FFN([z̄; h])`, 128 → 128 (ReLU) → 64.
#[derive(Clone, Copy, Debug)]
pub struct DecisionFfn {
    pub hidden: Linear,
    pub out: Linear,
}

impl DecisionFfn {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng) -> Self {
        DecisionFfn {
            hidden: Linear::new(store, rng, "reason.decision.hidden", 2 * D, 2 * D, true, Init::FanIn),
            out: Linear::new(store, rng, "reason.decision.out", 2 * D, D, true, Init::FanIn),
        }
    }

    pub fn forward(&self, s: &mut Session, zbar: Var, h: Var) -> Result<Var> {
        let x = s.tape.concat(&[zbar, h], 1)?;
        let x = self.hidden.forward(s, x)?;
        let x = s.tape.relu(x);
        self.out.forward(s, x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ActionScorer {
    pub wd: Linear,
    pub stop: ParamId,
}

impl ActionScorer {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng) -> Self {
        ActionScorer {
            wd: Linear::new(store, rng, "reason.wd", D, D, false, Init::FanIn),
            stop: store.init(rng, "reason.stop", &[1, D], Init::Uniform(1.0 / libm::sqrt(D as f64))),
        }
    }

    /// `[1, k + 1]` logits `(W_d z)ᵀ v_k / √d` for each candidate row of
    /// `features`, then the stop vector.
    pub fn logits(&self, s: &mut Session, z_final: Var, features: Var, candidates: &[Candidate]) -> Result<Var> {
        if candidates.is_empty() {
            return Err(Error::Contract("no navigable candidates at this node".into()));
        }
        let views: Vec<usize> = candidates.iter().map(|c| c.view).collect();
        let v = s.tape.gather_rows(features, &views)?;
        let stop = s.param(self.stop);
        let keys = s.tape.concat(&[v, stop], 0)?;
        let q = self.wd.forward(s, z_final)?;
        let kt = s.tape.transpose(keys)?;
        let l = s.tape.matmul(q, kt)?;
        Ok(s.tape.scale(l, 1.0 / libm::sqrt(D as f64)))
    }
}

pub fn softmax_vec(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectMode {
    Greedy,
    Sample(u64),
}

/// Index into `dist.probs`. Greedy ties go to the smallest candidate id, with
/// STOP ranked after every candidate.
pub fn select_index(dist: &ActionDistribution, mode: SelectMode) -> usize {
    match mode {
        SelectMode::Greedy => {
            let key = |i: usize| dist.candidates.get(i).copied().unwrap_or(usize::MAX);
            let mut best = 0;
            for i in 1..dist.probs.len() {
                let (p, b) = (dist.probs[i], dist.probs[best]);
                if p > b || (p == b && key(i) < key(best)) {
                    best = i;
                }
            }
            best
        }
        SelectMode::Sample(seed) => sample_index(&dist.probs, &mut seeded(seed)),
    }
}

pub fn sample_index(probs: &[f64], rng: &mut SeededRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

pub fn select_action(dist: &ActionDistribution, mode: SelectMode) -> Action {
    dist.action(select_index(dist, mode))
}
