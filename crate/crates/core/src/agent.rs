//! The navigation agent: per-step forward pass over encoders, fusion and reasoning.

use alloc::vec::Vec;

use crate::encoders::{ContextPhi, EncodedInstruction, Gru, InstructionEncoder, ObjectEncoder, ViewEncoder, D};
use crate::error::Result;
use crate::fusion::{Context, Dmta, FusionStack, FusionTrace};
use crate::numerics::{Tensor, Var};
use crate::params::{Init, Linear, ParamStore, Session};
use crate::reasoning::{softmax_vec, ActionDistribution, ActionScorer, DecisionFfn, InstructionAttention};
use crate::rng::seeded;
use crate::world::{ConceptVocabulary, PanoramicObservation};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub init_seed: u64,
    /// Heads in every fusion attention block.
    pub heads: usize,
    pub lang_layers: usize,
    pub lang_heads: usize,
    pub lang_hidden: usize,
    pub fusion: bool,
    pub instruction_attention: bool,
    pub history: bool,
    /// Score candidates on encoder features instead of fused ones.
    pub raw_candidates: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            init_seed: 0,
            heads: 4,
            lang_layers: 2,
            lang_heads: 4,
            lang_hidden: 128,
            fusion: true,
            instruction_attention: true,
            history: true,
            raw_candidates: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub lang: InstructionEncoder,
    pub views: ViewEncoder,
    pub objects: ObjectEncoder,
    pub phi: ContextPhi,
    pub gru: Gru,
    pub fusion: FusionStack,
    pub attention: InstructionAttention,
    pub decision: DecisionFfn,
    pub scorer: ActionScorer,
    pub mlm_fusion: Dmta,
    pub mlm_head: Linear,
    pub mvc_head: Linear,
}

/// Instruction encoding and history carried between steps.
#[derive(Clone, Debug)]
pub struct EpisodeState {
    pub lang: EncodedInstruction,
    pub lang_ctx: Context,
    pub h: Var,
    pub history: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub x0: Var,
    pub z_fused: Var,
    pub z_final: Var,
    pub eta: Var,
    pub h: Var,
    pub objects: Option<Var>,
    /// `[1, k + 1]`, candidates then STOP.
    pub logits: Var,
    pub trace: FusionTrace,
}

impl Agent {
    pub fn new(config: ModelConfig, vocab: &ConceptVocabulary) -> Self {
        let mut rng = seeded(config.init_seed);
        let mut store = ParamStore::new();
        let r = &mut rng;
        let s = &mut store;
        let lang = InstructionEncoder::new(s, r, vocab, config.lang_layers, config.lang_heads, config.lang_hidden);
        let views = ViewEncoder::new(s, r);
        let objects = ObjectEncoder::new(s, r);
        let phi = ContextPhi::new(s, r);
        let gru = Gru::new(s, r);
        let mut fusion = FusionStack::new(s, r, config.heads);
        fusion.set_enabled(config.fusion);
        let mut attention = InstructionAttention::new(s, r);
        attention.uniform = !config.instruction_attention;
        let decision = DecisionFfn::new(s, r);
        let scorer = ActionScorer::new(s, r);
        let mlm_fusion = Dmta::new(s, r, "aux.mlm.dmta", D, D, config.heads);
        let mlm_head = Linear::new(s, r, "aux.mlm.head", D, vocab.token_count(), true, Init::FanIn);
        let mvc_head = Linear::new(s, r, "aux.mvc.head", D, vocab.concept_count(), true, Init::FanIn);
        if !config.fusion {
            for p in fusion.residual_projections() {
                s.set_trainable(p.w, false);
            }
        }
        Agent {
            config,
            store,
            lang,
            views,
            objects,
            phi,
            gru,
            fusion,
            attention,
            decision,
            scorer,
            mlm_fusion,
            mlm_head,
            mvc_head,
        }
    }

    pub fn begin(&self, s: &mut Session, tokens: &[usize]) -> Result<EpisodeState> {
        let lang = self.lang.encode(s, tokens)?;
        let lang_ctx = Context {
            tokens: lang.tokens,
            valid: lang.valid.clone(),
        };
        let h = s.constant(Tensor::zeros(&[1, D]));
        Ok(EpisodeState {
            lang,
            lang_ctx,
            h,
            history: Vec::new(),
        })
    }

    /// One decision step at `obs`. `state` is not modified; call
    /// [`EpisodeState::advance`] with the output to move on.
    pub fn step(&self, s: &mut Session, state: &EpisodeState, obs: &PanoramicObservation, masked_views: &[usize]) -> Result<StepOutput> {
        let x0 = self.views.encode(s, obs, masked_views)?;
        let h = if self.config.history {
            let (ctx, _) = self.phi.forward(s, x0, state.lang.cls)?;
            self.gru.step(s, state.h, ctx)?
        } else {
            state.h
        };
        let history = if self.config.history {
            let mut rows = state.history.clone();
            rows.push(h);
            let t = if rows.len() == 1 { h } else { s.tape.concat(&rows, 0)? };
            Some(Context::all_valid(s, t))
        } else {
            None
        };
        let objects = self.objects.encode(s, obs)?;
        let object_ctx = objects.map(|o| Context::all_valid(s, o));
        let mut trace = FusionTrace::default();
        let z_fused = self
            .fusion
            .forward(s, x0, &state.lang_ctx, object_ctx.as_ref(), history.as_ref(), &mut trace)?;
        let (zbar, eta) = self.attention.forward(s, z_fused, state.lang.cls)?;
        let z_final = self.decision.forward(s, zbar, h)?;
        let features = if self.config.raw_candidates { x0 } else { z_fused };
        let logits = self.scorer.logits(s, z_final, features, &obs.candidates)?;
        Ok(StepOutput {
            x0,
            z_fused,
            z_final,
            eta,
            h,
            objects,
            logits,
            trace,
        })
    }

    /// `[1, N]` grounding logits of the object tokens against `z_final`.
    pub fn grounding_logits(&self, s: &mut Session, objects: Var, z_final: Var) -> Result<Var> {
        let ot = s.tape.transpose(objects)?;
        let l = s.tape.matmul(z_final, ot)?;
        Ok(s.tape.scale(l, 1.0 / libm::sqrt(D as f64)))
    }

    /// Reads the action distribution of a step off the tape.
    pub fn distribution(&self, s: &Session, out: &StepOutput, obs: &PanoramicObservation) -> ActionDistribution {
        let logits = s.value(out.logits).data().to_vec();
        ActionDistribution {
            candidates: obs.candidates.iter().map(|c| c.node).collect(),
            probs: softmax_vec(&logits),
            logits,
            eta: s.value(out.eta).data().to_vec(),
        }
    }

    /// Arg-max object index at the current node, smallest index on ties.
    pub fn ground(&self, s: &mut Session, out: &StepOutput) -> Result<Option<usize>> {
        let Some(o) = out.objects else { return Ok(None) };
        let l = self.grounding_logits(s, o, out.z_final)?;
        let v = s.value(l).data();
        let mut best = 0;
        for i in 1..v.len() {
            if v[i] > v[best] {
                best = i;
            }
        }
        Ok(Some(best))
    }
}

impl EpisodeState {
    pub fn advance(&mut self, out: &StepOutput) {
        self.h = out.h;
        self.history.push(out.h);
    }
}
