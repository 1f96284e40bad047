//! Navigation and grounding metrics over visited-node sequences.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::world::{Episode, NavGraph};

/// Success radius in metres.
pub const SUCCESS_RADIUS: f64 = 3.0;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpisodeResult {
    pub tl: f64,
    pub ne: f64,
    pub success: f64,
    pub oracle_success: f64,
    pub spl: f64,
    pub rgs: f64,
    pub rgspl: f64,
}

/// Means over episodes; everything except TL and NE in percent.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Report {
    pub episodes: usize,
    pub tl: f64,
    pub ne: f64,
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub rgs: f64,
    pub rgspl: f64,
}

pub fn shortest_path(world: &NavGraph, a: usize, b: usize) -> (f64, Vec<usize>) {
    world.shortest_path(a, b)
}

/// `ℓ* / max(TL, ℓ*)`, and 1 when both are zero.
pub fn path_efficiency(tl: f64, shortest: f64) -> f64 {
    let denom = tl.max(shortest);
    if denom == 0.0 {
        1.0
    } else {
        shortest / denom
    }
}

/// Scores a trajectory given as the visited nodes (start first) and the
/// object predicted at the end, if any.
pub fn score_episode(world: &NavGraph, episode: &Episode, trajectory: &[usize], predicted_object: Option<usize>) -> Result<EpisodeResult> {
    if trajectory.first() != Some(&episode.start) {
        return Err(Error::Validation(format!("trajectory of episode {} does not begin at its start node", episode.id)));
    }
    let mut tl = 0.0;
    for w in trajectory.windows(2) {
        tl += world
            .edge_length(w[0], w[1])
            .ok_or_else(|| Error::Validation(format!("trajectory moves along non-edge {}-{}", w[0], w[1])))?;
    }
    let to_goal = world.distances_from(episode.goal);
    let last = *trajectory.last().unwrap();
    let ne = to_goal[last];
    let success = if ne < SUCCESS_RADIUS { 1.0 } else { 0.0 };
    let best = trajectory.iter().map(|&n| to_goal[n]).fold(f64::INFINITY, f64::min);
    let oracle_success = if best < SUCCESS_RADIUS { 1.0 } else { 0.0 };
    let shortest = to_goal[episode.start];
    let eff = path_efficiency(tl, shortest);
    let grounded = success == 1.0 && last == episode.goal && predicted_object == Some(episode.target_object);
    let rgs = if grounded { 1.0 } else { 0.0 };
    Ok(EpisodeResult {
        tl,
        ne,
        success,
        oracle_success,
        spl: success * eff,
        rgs,
        rgspl: rgs * eff,
    })
}

pub fn aggregate(results: &[EpisodeResult]) -> Result<Report> {
    if results.is_empty() {
        return Err(Error::Argument("cannot aggregate zero episodes".into()));
    }
    let n = results.len() as f64;
    let mean = |f: fn(&EpisodeResult) -> f64| results.iter().map(f).sum::<f64>() / n;
    Ok(Report {
        episodes: results.len(),
        tl: mean(|r| r.tl),
        ne: mean(|r| r.ne),
        sr: 100.0 * mean(|r| r.success),
        osr: 100.0 * mean(|r| r.oracle_success),
        spl: 100.0 * mean(|r| r.spl),
        rgs: 100.0 * mean(|r| r.rgs),
        rgspl: 100.0 * mean(|r| r.rgspl),
    })
}
