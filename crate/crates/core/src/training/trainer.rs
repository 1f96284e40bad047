use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::losses::{episode_loss, LossBreakdown, LossSettings, LossWeights};
use super::optim::{clip_global_norm, Adam};
use crate::agent::Agent;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalSettings, Policy};
use crate::metrics::Report;
use crate::params::{ParamGrads, Session};
use crate::rng::{mix, seeded};
use crate::world::{Dataset, Episode, Split};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Leading epochs trained on the auxiliary terms only.
    pub warmup_epochs: usize,
    pub mlm_rate: f64,
    pub mvc_rate: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub teacher_forcing: bool,
    pub clip_norm: f64,
    pub obs_sigma: f64,
    /// Evaluate the validation splits every this many epochs; 0 disables.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 8,
            epochs: 10,
            warmup_epochs: 1,
            mlm_rate: 0.15,
            mvc_rate: 0.25,
            seed: 0,
            weights: LossWeights::default(),
            teacher_forcing: true,
            clip_norm: 5.0,
            obs_sigma: 0.05,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let rate = |r: f64| (0.0..=1.0).contains(&r);
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Argument("step size must be finite and nonnegative".into()));
        }
        if !rate(self.mlm_rate) || !rate(self.mvc_rate) {
            return Err(Error::Argument("masking rates must lie in [0, 1]".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch size must be positive".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Argument("clip norm must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Warmup,
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub stage: Stage,
    /// Episode means.
    pub loss: LossBreakdown,
    pub steps: usize,
    pub og_skipped: usize,
    pub val_seen: Option<Report>,
    pub val_unseen: Option<Report>,
}

fn check_finite(b: &LossBreakdown) -> Result<()> {
    for (term, v) in [("L_nav", b.nav), ("L_MLM", b.mlm), ("L_MVC", b.mvc), ("L_OG", b.og), ("L_total", b.total)] {
        if !v.is_finite() {
            return Err(Error::NonFinite { term });
        }
    }
    Ok(())
}

/// Summed gradient of one batch and the per-episode breakdowns.
pub fn batch_gradients(agent: &Agent, dataset: &Dataset, batch: &[&Episode], settings: &LossSettings, stage: Stage) -> Result<(ParamGrads, Vec<LossBreakdown>, usize)> {
    let mut grads = ParamGrads::zeros_like(&agent.store);
    let mut losses = Vec::with_capacity(batch.len());
    let mut skipped = 0;
    for e in batch {
        let mut s = Session::training(&agent.store);
        let l = episode_loss(&mut s, agent, dataset.world_of(e), &dataset.vocab, e, settings)?;
        check_finite(&l.breakdown)?;
        let objective = match stage {
            Stage::Warmup => l.auxiliary,
            Stage::Full => l.total,
        };
        let g = s.backward(objective)?;
        grads.accumulate(&g);
        losses.push(l.breakdown);
        skipped += l.og_skipped as usize;
    }
    if !grads.global_norm().is_finite() {
        return Err(Error::NonFinite { term: "gradient" });
    }
    Ok((grads, losses, skipped))
}

pub fn mean_breakdown(items: &[LossBreakdown], weights: LossWeights) -> LossBreakdown {
    let n = items.len().max(1) as f64;
    let m = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
    LossBreakdown::combine(m(|b| b.nav), m(|b| b.mlm), m(|b| b.mvc), m(|b| b.og), weights)
}

/// Trains in place. `on_epoch` sees each log record as it is produced.
pub fn train(agent: &mut Agent, dataset: &Dataset, config: &TrainConfig, mut on_epoch: impl FnMut(&EpochLog)) -> Result<Vec<EpochLog>> {
    config.validate()?;
    let train: Vec<&Episode> = dataset.split(Split::Train);
    if train.is_empty() {
        return Err(Error::Argument("the train split is empty".into()));
    }
    let mut adam = Adam::new(&agent.store, config.lr);
    let mut logs = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    for epoch in 0..config.epochs {
        let stage = if epoch < config.warmup_epochs { Stage::Warmup } else { Stage::Full };
        let mut order = train.clone();
        order.shuffle(&mut seeded(mix(config.seed, 0xE0 + epoch as u64)));
        let settings = LossSettings {
            weights: config.weights,
            mlm_rate: config.mlm_rate,
            mvc_rate: config.mvc_rate,
            obs_sigma: config.obs_sigma,
            teacher_forcing: config.teacher_forcing,
            seed: mix(config.seed, epoch as u64),
        };
        let mut all = Vec::with_capacity(order.len());
        let mut skipped = 0;
        for batch in order.chunks(config.batch_size) {
            let (mut grads, losses, sk) = batch_gradients(agent, dataset, batch, &settings, stage)?;
            clip_global_norm(&mut grads, config.clip_norm);
            adam.step(&mut agent.store, &grads);
            all.extend(losses);
            skipped += sk;
            steps += 1;
        }
        let evaluate_now = config.eval_every > 0 && ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs);
        let eval = EvalSettings {
            obs_sigma: config.obs_sigma,
            seed: mix(config.seed, 0xEEA1),
        };
        let report = |split: Split| -> Result<Option<Report>> {
            if !evaluate_now || dataset.split(split).is_empty() {
                return Ok(None);
            }
            Ok(Some(evaluate(Policy::Model(agent), dataset, split, &eval)?.report))
        };
        let log = EpochLog {
            epoch,
            stage,
            loss: mean_breakdown(&all, config.weights),
            steps,
            og_skipped: skipped,
            val_seen: report(Split::ValSeen)?,
            val_unseen: report(Split::ValUnseen)?,
        };
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}
