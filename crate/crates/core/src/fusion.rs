//! Cross-attention and gated feed-forward blocks arranged as a four-stage
//! encoder/decoder over the 36 view tokens, plus object and history fusion.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::attention::{key_mask, multi_head};
use crate::encoders::D;
use crate::error::{Error, Result};
use crate::numerics::{Tensor, Var};
use crate::params::{Init, Linear, ParamStore, Session};
use crate::rng::SeededRng;

/// `(tokens, channels)` per stage.
pub const STAGE_PLAN: [(usize, usize); 4] = [(36, 64), (18, 96), (9, 128), (9, 160)];

/// Key/value set for a cross-attention block. `valid` marks usable rows.
#[derive(Clone, Debug)]
pub struct Context {
    pub tokens: Var,
    pub valid: Vec<bool>,
}

impl Context {
    pub fn all_valid(s: &Session, tokens: Var) -> Self {
        let n = s.tape.shape(tokens)[0];
        Context { tokens, valid: vec![true; n] }
    }
}

/// Cross-attention from `x` to a context with a zero-initialised output
/// projection and a residual connection.
#[derive(Clone, Copy, Debug)]
pub struct Dmta {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
    pub enabled: bool,
}

impl Dmta {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, channels: usize, context: usize, heads: usize) -> Self {
        Dmta {
            q: Linear::new(store, rng, &format!("{name}.q"), channels, channels, false, Init::FanIn),
            k: Linear::new(store, rng, &format!("{name}.k"), context, channels, false, Init::FanIn),
            v: Linear::new(store, rng, &format!("{name}.v"), context, channels, false, Init::FanIn),
            out: Linear::new(store, rng, &format!("{name}.out"), channels, channels, false, Init::Zero),
            heads,
            enabled: true,
        }
    }

    /// The attended term `X̃` and the per-head weights, or `None` when the
    /// block is disabled or the context has no valid rows.
    pub fn attend(&self, s: &mut Session, x: Var, ctx: Option<&Context>) -> Result<Option<(Var, Vec<Var>)>> {
        let Some(ctx) = ctx else { return Ok(None) };
        if !self.enabled || !ctx.valid.iter().any(|&v| v) {
            return Ok(None);
        }
        let rows = s.tape.shape(x)[0];
        let q = self.q.forward(s, x)?;
        let k = self.k.forward(s, ctx.tokens)?;
        let v = self.v.forward(s, ctx.tokens)?;
        let mask = key_mask(s, rows, &ctx.valid);
        let (a, weights) = multi_head(s, q, k, v, self.heads, mask)?;
        Ok(Some((self.out.forward(s, a)?, weights)))
    }

    pub fn forward(&self, s: &mut Session, x: Var, ctx: Option<&Context>) -> Result<Var> {
        match self.attend(s, x, ctx)? {
            None => Ok(x),
            Some((t, _)) => s.tape.add(x, t),
        }
    }
}

/// `X′ + proj(ReLU(W₁X′) ⊙ σ(W₂X′))`, with `proj` zero-initialised.
#[derive(Clone, Copy, Debug)]
pub struct Dgffn {
    pub w1: Linear,
    pub w2: Linear,
    pub out: Linear,
    pub enabled: bool,
}

impl Dgffn {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, channels: usize) -> Self {
        Dgffn {
            w1: Linear::new(store, rng, &format!("{name}.w1"), channels, channels, true, Init::FanIn),
            w2: Linear::new(store, rng, &format!("{name}.w2"), channels, channels, true, Init::FanIn),
            out: Linear::new(store, rng, &format!("{name}.out"), channels, channels, false, Init::Zero),
            enabled: true,
        }
    }

    /// The gated product `F₁ ⊙ F₂` before projection.
    pub fn gate(&self, s: &mut Session, x: Var) -> Result<(Var, Var)> {
        let f1 = self.w1.forward(s, x)?;
        let f1 = s.tape.relu(f1);
        let f2 = self.w2.forward(s, x)?;
        let f2 = s.tape.sigmoid(f2);
        Ok((s.tape.mul(f1, f2)?, f1))
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        if !self.enabled {
            return Ok(x);
        }
        let (g, _) = self.gate(s, x)?;
        let p = self.out.forward(s, g)?;
        s.tape.add(x, p)
    }
}

/// `[⌈n/2⌉, n]` matrix averaging adjacent token pairs; an odd tail is copied.
pub fn pool_matrix(n: usize) -> Tensor {
    let m = n.div_ceil(2);
    let mut data = vec![0.0; m * n];
    for i in 0..m {
        if 2 * i + 1 < n {
            data[i * n + 2 * i] = 0.5;
            data[i * n + 2 * i + 1] = 0.5;
        } else {
            data[i * n + 2 * i] = 1.0;
        }
    }
    Tensor::new(vec![m, n], data).expect("pool shape")
}

/// Source row for each of `target` rows under nearest-neighbour duplication.
pub fn duplicate_rows(source: usize, target: usize) -> Vec<usize> {
    (0..target).map(|i| i * source / target).collect()
}

/// Mean-pools adjacent tokens, then projects channels.
#[derive(Clone, Copy, Debug)]
pub struct Downsample {
    pub proj: Linear,
}

impl Downsample {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, from: usize, to: usize) -> Self {
        Downsample {
            proj: Linear::new(store, rng, name, from, to, true, Init::FanIn),
        }
    }

    pub fn pool(s: &mut Session, x: Var) -> Result<Var> {
        let n = s.tape.shape(x)[0];
        let p = s.constant(pool_matrix(n));
        s.tape.matmul(p, x)
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let p = Self::pool(s, x)?;
        self.proj.forward(s, p)
    }
}

/// Duplicates tokens up to a target count, then projects channels.
#[derive(Clone, Copy, Debug)]
pub struct Upsample {
    pub proj: Linear,
}

impl Upsample {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, name: &str, from: usize, to: usize) -> Self {
        Upsample {
            proj: Linear::new(store, rng, name, from, to, true, Init::FanIn),
        }
    }

    pub fn duplicate(s: &mut Session, x: Var, tokens: usize) -> Result<Var> {
        let n = s.tape.shape(x)[0];
        if n == tokens {
            return Ok(x);
        }
        s.tape.gather_rows(x, &duplicate_rows(n, tokens))
    }

    pub fn forward(&self, s: &mut Session, x: Var, tokens: usize) -> Result<Var> {
        let d = Self::duplicate(s, x, tokens)?;
        self.proj.forward(s, d)
    }
}

#[derive(Clone, Copy, Debug)]
struct DecoderStage {
    up: Upsample,
    dmta: Dmta,
    merge: Linear,
    ffn: Dgffn,
}

/// Attention maps recorded during one fusion pass, for inspection.
#[derive(Clone, Debug, Default)]
pub struct FusionTrace {
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct FusionStack {
    down: Vec<Option<Downsample>>,
    enc_dmta: Vec<Dmta>,
    enc_ffn: Vec<Dgffn>,
    dec: Vec<DecoderStage>,
    pub out: Linear,
    pub objects: Dmta,
    pub history: Dmta,
}

impl FusionStack {
    pub fn new(store: &mut ParamStore, rng: &mut SeededRng, heads: usize) -> Self {
        let mut down = Vec::new();
        let mut enc_dmta = Vec::new();
        let mut enc_ffn = Vec::new();
        for (s, &(_, c)) in STAGE_PLAN.iter().enumerate() {
            down.push(if s == 0 {
                None
            } else {
                Some(Downsample::new(store, rng, &format!("fusion.enc{s}.down"), STAGE_PLAN[s - 1].1, c))
            });
            enc_dmta.push(Dmta::new(store, rng, &format!("fusion.enc{s}.dmta"), c, D, heads));
            enc_ffn.push(Dgffn::new(store, rng, &format!("fusion.enc{s}.ffn"), c));
        }
        let mut dec = Vec::new();
        for s in (0..STAGE_PLAN.len() - 1).rev() {
            let (c_hi, c) = (STAGE_PLAN[s + 1].1, STAGE_PLAN[s].1);
            dec.push(DecoderStage {
                up: Upsample::new(store, rng, &format!("fusion.dec{s}.up"), c_hi, c),
                dmta: Dmta::new(store, rng, &format!("fusion.dec{s}.dmta"), c, D, heads),
                merge: Linear::new(store, rng, &format!("fusion.dec{s}.merge"), 2 * c, c, true, Init::FanIn),
                ffn: Dgffn::new(store, rng, &format!("fusion.dec{s}.ffn"), c),
            });
        }
        let out = Linear::new(store, rng, "fusion.out", D, D, true, Init::FanIn);
        let objects = Dmta::new(store, rng, "fusion.objects", D, D, heads);
        let history = Dmta::new(store, rng, "fusion.history", D, D, heads);
        FusionStack {
            down,
            enc_dmta,
            enc_ffn,
            dec,
            out,
            objects,
            history,
        }
    }

    /// Switches every attention and gated block on or off; off means the
    /// residual identity, as with frozen zero output projections.
    pub fn set_enabled(&mut self, enabled: bool) {
        for d in self.enc_dmta.iter_mut().chain(self.dec.iter_mut().map(|d| &mut d.dmta)) {
            d.enabled = enabled;
        }
        for f in self.enc_ffn.iter_mut().chain(self.dec.iter_mut().map(|d| &mut d.ffn)) {
            f.enabled = enabled;
        }
        self.objects.enabled = enabled;
        self.history.enabled = enabled;
    }

    /// Switches only the instruction cross-attention blocks.
    pub fn set_language_attention(&mut self, enabled: bool) {
        for d in self.enc_dmta.iter_mut().chain(self.dec.iter_mut().map(|d| &mut d.dmta)) {
            d.enabled = enabled;
        }
    }

    pub fn encoder_dmta(&self, stage: usize) -> &Dmta {
        &self.enc_dmta[stage]
    }

    pub fn downsample(&self, stage: usize) -> Option<&Downsample> {
        self.down[stage].as_ref()
    }

    /// Every residual output projection in the stack.
    pub fn residual_projections(&self) -> Vec<Linear> {
        let mut v: Vec<Linear> = Vec::new();
        for s in 0..self.enc_dmta.len() {
            v.push(self.enc_dmta[s].out);
            v.push(self.enc_ffn[s].out);
        }
        for d in &self.dec {
            v.push(d.dmta.out);
            v.push(d.ffn.out);
        }
        v.push(self.objects.out);
        v.push(self.history.out);
        v
    }

    fn apply_dmta(s: &mut Session, dmta: &Dmta, x: Var, ctx: Option<&Context>, trace: &mut FusionTrace) -> Result<Var> {
        match dmta.attend(s, x, ctx)? {
            None => Ok(x),
            Some((t, w)) => {
                trace.attention.extend(w);
                s.tape.add(x, t)
            }
        }
    }

    /// Stage outputs `Z¹..Z⁴`.
    pub fn encode(&self, s: &mut Session, x0: Var, lang: &Context, trace: &mut FusionTrace) -> Result<Vec<Var>> {
        let shape = s.tape.shape(x0).to_vec();
        if shape != [STAGE_PLAN[0].0, STAGE_PLAN[0].1] {
            return Err(Error::dim("encoder_pass", &shape, &[STAGE_PLAN[0].0, STAGE_PLAN[0].1]));
        }
        let mut z = x0;
        let mut stages = Vec::with_capacity(STAGE_PLAN.len());
        for (st, &(n, _)) in STAGE_PLAN.iter().enumerate() {
            if let Some(d) = &self.down[st] {
                z = if s.tape.shape(z)[0] == n {
                    d.proj.forward(s, z)?
                } else {
                    d.forward(s, z)?
                };
            }
            z = Self::apply_dmta(s, &self.enc_dmta[st], z, Some(lang), trace)?;
            z = self.enc_ffn[st].forward(s, z)?;
            stages.push(z);
        }
        Ok(stages)
    }

    /// Decoder from the stage outputs back to `[36, D]`.
    pub fn decode(&self, s: &mut Session, stages: &[Var], lang: &Context, trace: &mut FusionTrace) -> Result<Var> {
        let mut z = *stages.last().ok_or_else(|| Error::Argument("no encoder stages".into()))?;
        for (d, st) in self.dec.iter().zip((0..STAGE_PLAN.len() - 1).rev()) {
            let u = d.up.forward(s, z, STAGE_PLAN[st].0)?;
            let u = Self::apply_dmta(s, &d.dmta, u, Some(lang), trace)?;
            let c = s.tape.concat(&[u, stages[st]], 1)?;
            let m = d.merge.forward(s, c)?;
            z = d.ffn.forward(s, m)?;
        }
        self.out.forward(s, z)
    }

    /// `X″ = X′ + X̃_o + X̃_h`; absent contexts contribute nothing.
    pub fn fuse_object_history(
        &self,
        s: &mut Session,
        x: Var,
        objects: Option<&Context>,
        history: Option<&Context>,
        trace: &mut FusionTrace,
    ) -> Result<Var> {
        let mut out = x;
        for (block, ctx) in [(&self.objects, objects), (&self.history, history)] {
            if let Some((t, w)) = block.attend(s, x, ctx)? {
                trace.attention.extend(w);
                out = s.tape.add(out, t)?;
            }
        }
        Ok(out)
    }

    pub fn forward(
        &self,
        s: &mut Session,
        x0: Var,
        lang: &Context,
        objects: Option<&Context>,
        history: Option<&Context>,
        trace: &mut FusionTrace,
    ) -> Result<Var> {
        let stages = self.encode(s, x0, lang, trace)?;
        let x = self.decode(s, &stages, lang, trace)?;
        self.fuse_object_history(s, x, objects, history, trace)
    }
}
