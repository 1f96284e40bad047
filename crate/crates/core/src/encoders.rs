//! Instruction, view, object and history encoders.

use alloc::format;
use alloc::vec::Vec;

use crate::attention::{key_mask, multi_head};
use crate::error::{Error, Result};
use crate::numerics::{Tensor, Var};
use crate::params::{Init, Linear, ParamId, ParamStore, Session};
use crate::rng::SeededRng;
use crate::world::{ConceptVocabulary, PanoramicObservation, CLS, FEATURE_DIM, LATENT_DIM, MAX_INSTRUCTION_TOKENS, ORIENTATION_DIM, PAD};

/// Encoder output width.
pub const D: usize = 64;
const LN_EPS: f64 = 1e-5;

/// Token embeddings for `[CLS] + tokens`, with the validity of each position.
#[derive(Clone, Debug)]
pub struct EncodedInstruction {
    /// `[T + 1, D]`
    pub tokens: Var,
    /// `[1, D]`, row 0 of `tokens`.
    pub cls: Var,
    pub valid: Vec<bool>,
}

#[derive(Clone, Debug)]
struct EncoderLayer {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ff1: Linear,
    ff2: Linear,
}

/// Pre-norm self-attention encoder over frozen concept-space word vectors.
#[derive(Clone, Debug)]
pub struct InstructionEncoder {
    pub word_table: ParamId,
    pub word_proj: Linear,
    pub positions: ParamId,
    layers: Vec<EncoderLayer>,
    heads: usize,
    vocab: usize,
}

impl InstructionEncoder {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, vocab: &ConceptVocabulary, layers: usize, heads: usize, hidden: usize) -> Self {
        let rows: Vec<Vec<f64>> = vocab.word_embeddings().to_vec();
        let word_table = store.register("lang.word_table", Tensor::from_rows(&rows).expect("uniform widths"), false);
        let word_proj = Linear::new(store, rng, "lang.word_proj", LATENT_DIM, D, true, Init::FanIn);
        let positions = store.init(rng, "lang.positions", &[MAX_INSTRUCTION_TOKENS + 1, D], Init::Uniform(1.0));
        let layers = (0..layers)
            .map(|l| {
                let n = |part: &str| format!("lang.layer{l}.{part}");
                EncoderLayer {
                    q: Linear::new(store, rng, &n("q"), D, D, false, Init::FanIn),
                    k: Linear::new(store, rng, &n("k"), D, D, false, Init::FanIn),
                    v: Linear::new(store, rng, &n("v"), D, D, false, Init::FanIn),
                    o: Linear::new(store, rng, &n("o"), D, D, true, Init::FanIn),
                    ff1: Linear::new(store, rng, &n("ff1"), D, hidden, true, Init::FanIn),
                    ff2: Linear::new(store, rng, &n("ff2"), hidden, D, true, Init::FanIn),
                }
            })
            .collect();
        InstructionEncoder {
            word_table,
            word_proj,
            positions,
            layers,
            heads,
            vocab: vocab.token_count(),
        }
    }

    /// Encodes `tokens` (without the leading `[CLS]`). `[PAD]` positions are
    /// masked as keys and zeroed in the output.
    pub fn encode(&self, s: &mut Session, tokens: &[usize]) -> Result<EncodedInstruction> {
        if tokens.len() > MAX_INSTRUCTION_TOKENS {
            return Err(Error::Argument(format!(
                "instruction of {} tokens exceeds {MAX_INSTRUCTION_TOKENS}",
                tokens.len()
            )));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.vocab) {
            return Err(Error::Vocabulary(format!("token {t} is not in the vocabulary of {}", self.vocab)));
        }
        let mut ids = Vec::with_capacity(tokens.len() + 1);
        ids.push(CLS);
        ids.extend_from_slice(tokens);
        let n = ids.len();
        let valid: Vec<bool> = ids.iter().map(|&t| t != PAD).collect();

        let table = s.param(self.word_table);
        let words = s.tape.gather_rows(table, &ids)?;
        let x = self.word_proj.forward(s, words)?;
        let pos = s.param(self.positions);
        let pos = s.tape.narrow(pos, 0, 0, n)?;
        let mut x = s.tape.add(x, pos)?;
        let mask = key_mask(s, n, &valid);
        for layer in &self.layers {
            let h = s.tape.layer_norm(x, LN_EPS);
            let q = layer.q.forward(s, h)?;
            let k = layer.k.forward(s, h)?;
            let v = layer.v.forward(s, h)?;
            let (a, _) = multi_head(s, q, k, v, self.heads, mask)?;
            let a = layer.o.forward(s, a)?;
            x = s.tape.add(x, a)?;
            let h = s.tape.layer_norm(x, LN_EPS);
            let f = layer.ff1.forward(s, h)?;
            let f = s.tape.relu(f);
            let f = layer.ff2.forward(s, f)?;
            x = s.tape.add(x, f)?;
        }
        let mut out = s.tape.layer_norm(x, LN_EPS);
        if valid.iter().any(|&v| !v) {
            let mut keep = Vec::with_capacity(n * D);
            for &v in &valid {
                keep.extend(core::iter::repeat_n(if v { 1.0 } else { 0.0 }, D));
            }
            let keep = s.constant(Tensor::new(alloc::vec![n, D], keep)?);
            out = s.tape.mul(out, keep)?;
        }
        let cls = s.tape.narrow(out, 0, 0, 1)?;
        Ok(EncodedInstruction { tokens: out, cls, valid })
    }
}

/// `x_i = [v_i; o_i]` projected to `D`, one row per view.
#[derive(Clone, Copy, Debug)]
pub struct ViewEncoder {
    pub proj: Linear,
}

impl ViewEncoder {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng) -> Self {
        ViewEncoder {
            proj: Linear::new(store, rng, "views.proj", FEATURE_DIM + ORIENTATION_DIM, D, true, Init::FanIn),
        }
    }

    /// `masked` views have their visual features zeroed; orientations are kept.
    pub fn encode(&self, s: &mut Session, obs: &PanoramicObservation, masked: &[usize]) -> Result<Var> {
        let mut views = obs.views.clone();
        for &m in masked {
            views.data_mut()[m * FEATURE_DIM..(m + 1) * FEATURE_DIM].fill(0.0);
        }
        let v = s.constant(views);
        let o = s.constant(obs.orientations.clone());
        let x = s.tape.concat(&[v, o], 1)?;
        self.proj.forward(s, x)
    }
}

/// Linear adapter from object features to `D`.
#[derive(Clone, Copy, Debug)]
pub struct ObjectEncoder {
    pub adapter: Linear,
}

impl ObjectEncoder {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng) -> Self {
        ObjectEncoder {
            adapter: Linear::new(store, rng, "objects.adapter", FEATURE_DIM, D, true, Init::FanIn),
        }
    }

    /// `None` when the node has no objects.
    pub fn encode(&self, s: &mut Session, obs: &PanoramicObservation) -> Result<Option<Var>> {
        match obs.object_tensor() {
            None => Ok(None),
            Some(t) => {
                let o = s.constant(t);
                Ok(Some(self.adapter.forward(s, o)?))
            }
        }
    }
}

/// Single-head attention pooling of view rows, queried by the sentence vector.
#[derive(Clone, Copy, Debug)]
pub struct ContextPhi {
    pub q: Linear,
    pub k: Linear,
}

impl ContextPhi {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng) -> Self {
        ContextPhi {
            q: Linear::new(store, rng, "phi.q", D, D, false, Init::FanIn),
            k: Linear::new(store, rng, "phi.k", D, D, false, Init::FanIn),
        }
    }

    /// Returns the `[1, D]` context and the `[1, n]` weights.
    pub fn forward(&self, s: &mut Session, views: Var, cls: Var) -> Result<(Var, Var)> {
        let q = self.q.forward(s, cls)?;
        let k = self.k.forward(s, views)?;
        let kt = s.tape.transpose(k)?;
        let logits = s.tape.matmul(q, kt)?;
        let logits = s.tape.scale(logits, 1.0 / libm::sqrt(D as f64));
        let w = s.tape.softmax(logits, 1)?;
        Ok((s.tape.matmul(w, views)?, w))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Gru {
    pub update: Linear,
    pub reset: Linear,
    pub candidate: Linear,
}

impl Gru {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng) -> Self {
        Gru {
            update: Linear::new(store, rng, "gru.update", 2 * D, D, true, Init::FanIn),
            reset: Linear::new(store, rng, "gru.reset", 2 * D, D, true, Init::FanIn),
            candidate: Linear::new(store, rng, "gru.candidate", 2 * D, D, true, Init::FanIn),
        }
    }

    /// `h' = h + z ⊙ (ĥ − h)` with `ĥ = tanh(W [r ⊙ h; x])`.
    pub fn step(&self, s: &mut Session, h: Var, x: Var) -> Result<Var> {
        let hx = s.tape.concat(&[h, x], 1)?;
        let z = self.update.forward(s, hx)?;
        let z = s.tape.sigmoid(z);
        let r = self.reset.forward(s, hx)?;
        let r = s.tape.sigmoid(r);
        let rh = s.tape.mul(r, h)?;
        let rhx = s.tape.concat(&[rh, x], 1)?;
        let c = self.candidate.forward(s, rhx)?;
        let c = s.tape.tanh(c);
        let delta = s.tape.sub(c, h)?;
        let gated = s.tape.mul(z, delta)?;
        s.tape.add(h, gated)
    }
}
