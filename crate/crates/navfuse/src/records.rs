//! JSON and JSON-lines records for trajectories, reports and training logs.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use navfuse_core::eval::{StepRecord, Trajectory};
use navfuse_core::metrics::Report;
use navfuse_core::training::{EpochLog, Stage};
use navfuse_core::world::Action;

use crate::error::{self, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionRecord {
    Stop,
    Move(usize),
}

impl From<Action> for ActionRecord {
    fn from(a: Action) -> Self {
        match a {
            Action::Stop => ActionRecord::Stop,
            Action::Move(m) => ActionRecord::Move(m),
        }
    }
}

impl From<ActionRecord> for Action {
    fn from(a: ActionRecord) -> Self {
        match a {
            ActionRecord::Stop => Action::Stop,
            ActionRecord::Move(m) => Action::Move(m),
        }
    }
}

/// One decision. `grounded` is only ever set on an episode's last step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepLine {
    pub episode: usize,
    pub step: usize,
    pub node: usize,
    pub candidates: Vec<usize>,
    /// Candidates then STOP.
    pub probs: Vec<f64>,
    pub action: ActionRecord,
    pub eta: Vec<f64>,
    pub stop_prob: f64,
    pub grounded: Option<usize>,
}

pub fn step_lines(t: &Trajectory) -> Vec<StepLine> {
    let last = t.steps.len().saturating_sub(1);
    t.steps
        .iter()
        .enumerate()
        .map(|(i, s)| StepLine {
            episode: s.episode,
            step: s.step,
            node: s.node,
            candidates: s.candidates.clone(),
            probs: s.probs.clone(),
            action: s.action.into(),
            eta: s.eta.clone(),
            stop_prob: s.stop_prob,
            grounded: if i == last { t.grounded } else { None },
        })
        .collect()
}

pub fn trajectories_to_jsonl(ts: &[Trajectory]) -> Result<String> {
    let mut out = String::new();
    for t in ts {
        for line in step_lines(t) {
            out.push_str(&serde_json::to_string(&line).map_err(|e| Error::Format(e.to_string()))?);
            out.push('\n');
        }
    }
    Ok(out)
}

/// Regroups step lines into trajectories, ordered by episode id.
pub fn trajectories_from_jsonl(text: &str) -> Result<Vec<Trajectory>> {
    let mut by_episode: BTreeMap<usize, Vec<StepLine>> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: StepLine =
            serde_json::from_str(raw).map_err(|e| Error::Format(format!("trajectory line {}: {e}", i + 1)))?;
        by_episode.entry(line.episode).or_default().push(line);
    }
    let mut out = Vec::new();
    for (episode, mut lines) in by_episode {
        lines.sort_by_key(|l| l.step);
        if lines.iter().enumerate().any(|(i, l)| l.step != i) {
            return Err(Error::Format(format!("episode {episode} has missing or repeated steps")));
        }
        let mut nodes = vec![lines[0].node];
        for l in &lines {
            if *nodes.last().unwrap() != l.node {
                return Err(Error::Format(format!("episode {episode} step {} is not where the last move led", l.step)));
            }
            if let ActionRecord::Move(m) = l.action {
                nodes.push(m);
            }
        }
        let grounded = lines.last().and_then(|l| l.grounded);
        let steps = lines
            .into_iter()
            .map(|l| StepRecord {
                episode: l.episode,
                step: l.step,
                node: l.node,
                candidates: l.candidates,
                probs: l.probs,
                action: l.action.into(),
                eta: l.eta,
                stop_prob: l.stop_prob,
            })
            .collect();
        out.push(Trajectory {
            episode,
            steps,
            nodes,
            grounded,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRecord {
    pub episodes: usize,
    pub tl: f64,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub rgs: f64,
    pub rgspl: f64,
}

impl From<&Report> for ReportRecord {
    fn from(r: &Report) -> Self {
        ReportRecord {
            episodes: r.episodes,
            tl: r.tl,
            ne: r.ne,
            sr: r.sr,
            osr: r.osr,
            spl: r.spl,
            rgs: r.rgs,
            rgspl: r.rgspl,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub split: String,
    pub policy: String,
    pub report: ReportRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLine {
    pub epoch: usize,
    pub stage: String,
    pub nav: f64,
    pub mlm: f64,
    pub mvc: f64,
    pub og: f64,
    pub total: f64,
    pub steps: usize,
    pub og_skipped: usize,
    pub val_seen: Option<ReportRecord>,
    pub val_unseen: Option<ReportRecord>,
}

impl From<&EpochLog> for EpochLine {
    fn from(l: &EpochLog) -> Self {
        EpochLine {
            epoch: l.epoch,
            stage: match l.stage {
                Stage::Warmup => "warmup",
                Stage::Full => "full",
            }
            .into(),
            nav: l.loss.nav,
            mlm: l.loss.mlm,
            mvc: l.loss.mvc,
            og: l.loss.og,
            total: l.loss.total,
            steps: l.steps,
            og_skipped: l.og_skipped,
            val_seen: l.val_seen.as_ref().map(Into::into),
            val_unseen: l.val_unseen.as_ref().map(Into::into),
        }
    }
}

pub fn to_line<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(error::read(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
