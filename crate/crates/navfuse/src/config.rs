//! Flat `key = value` run configuration. Unknown keys are rejected.

use std::fmt::Write as _;
use std::str::FromStr;

use navfuse_core::agent::ModelConfig;
use navfuse_core::training::TrainConfig;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub model: ModelConfig,
}

pub const KEYS: &[&str] = &[
    "lr",
    "batch_size",
    "epochs",
    "warmup_epochs",
    "mlm_rate",
    "mvc_rate",
    "seed",
    "weight_mlm",
    "weight_mvc",
    "weight_og",
    "teacher_forcing",
    "clip_norm",
    "obs_sigma",
    "eval_every",
    "init_seed",
    "heads",
    "lang_layers",
    "lang_heads",
    "lang_hidden",
    "fusion",
    "instruction_attention",
    "history",
    "raw_candidates",
];

fn value<T: FromStr>(key: &str, raw: &str, line: usize) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Format(format!("line {line}: bad value {raw:?} for {key}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        let mut seen = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("line {n}: expected key = value")))?;
            let (key, v) = (key.trim(), v.trim());
            if seen.contains(&key) {
                return Err(Error::Format(format!("line {n}: duplicate key {key}")));
            }
            seen.push(key);
            let (t, m) = (&mut c.train, &mut c.model);
            match key {
                "lr" => t.lr = value(key, v, n)?,
                "batch_size" => t.batch_size = value(key, v, n)?,
                "epochs" => t.epochs = value(key, v, n)?,
                "warmup_epochs" => t.warmup_epochs = value(key, v, n)?,
                "mlm_rate" => t.mlm_rate = value(key, v, n)?,
                "mvc_rate" => t.mvc_rate = value(key, v, n)?,
                "seed" => t.seed = value(key, v, n)?,
                "weight_mlm" => t.weights.mlm = value(key, v, n)?,
                "weight_mvc" => t.weights.mvc = value(key, v, n)?,
                "weight_og" => t.weights.og = value(key, v, n)?,
                "teacher_forcing" => t.teacher_forcing = value(key, v, n)?,
                "clip_norm" => t.clip_norm = value(key, v, n)?,
                "obs_sigma" => t.obs_sigma = value(key, v, n)?,
                "eval_every" => t.eval_every = value(key, v, n)?,
                "init_seed" => m.init_seed = value(key, v, n)?,
                "heads" => m.heads = value(key, v, n)?,
                "lang_layers" => m.lang_layers = value(key, v, n)?,
                "lang_heads" => m.lang_heads = value(key, v, n)?,
                "lang_hidden" => m.lang_hidden = value(key, v, n)?,
                "fusion" => m.fusion = value(key, v, n)?,
                "instruction_attention" => m.instruction_attention = value(key, v, n)?,
                "history" => m.history = value(key, v, n)?,
                "raw_candidates" => m.raw_candidates = value(key, v, n)?,
                _ => return Err(Error::Format(format!("line {n}: unknown key {key}"))),
            }
        }
        c.train.validate()?;
        if c.model.heads == 0 || c.model.lang_heads == 0 || c.model.lang_hidden == 0 {
            return Err(Error::Format("head counts and widths must be positive".into()));
        }
        Ok(c)
    }

    /// Every key in `KEYS` order. Floats use the shortest round-trip form,
    /// so `parse(render(c)) == c`.
    pub fn render(&self) -> String {
        let (t, m) = (&self.train, &self.model);
        let mut s = String::new();
        let mut put = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("lr", &t.lr);
        put("batch_size", &t.batch_size);
        put("epochs", &t.epochs);
        put("warmup_epochs", &t.warmup_epochs);
        put("mlm_rate", &t.mlm_rate);
        put("mvc_rate", &t.mvc_rate);
        put("seed", &t.seed);
        put("weight_mlm", &t.weights.mlm);
        put("weight_mvc", &t.weights.mvc);
        put("weight_og", &t.weights.og);
        put("teacher_forcing", &t.teacher_forcing);
        put("clip_norm", &t.clip_norm);
        put("obs_sigma", &t.obs_sigma);
        put("eval_every", &t.eval_every);
        put("init_seed", &m.init_seed);
        put("heads", &m.heads);
        put("lang_layers", &m.lang_layers);
        put("lang_heads", &m.lang_heads);
        put("lang_hidden", &m.lang_hidden);
        put("fusion", &m.fusion);
        put("instruction_attention", &m.instruction_attention);
        put("history", &m.history);
        put("raw_candidates", &m.raw_candidates);
        s
    }
}
