use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use navfuse_core::agent::Agent;
use navfuse_core::eval::{evaluate, EvalSettings, Policy};
use navfuse_core::training::train;
use navfuse_core::world::{build_dataset, Action, DatasetConfig, InstructionMix, Split, WorldConfig};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::records::{self, EpochLine, EvaluationRecord, ReportRecord};
use crate::{checkpoint, worldfile};

#[derive(Parser, Debug)]
#[command(name = "navfuse", version, about = "Synthetic instruction-following navigation: worlds, training, evaluation, replay")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mix {
    Stepwise,
    GoalOriented,
    Alternating,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Model,
    Expert,
    Random,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate worlds and split-tagged episodes into a JSON file.
    GenerateWorld {
        #[arg(long)]
        seed: u64,
        /// Nodes per world.
        #[arg(long)]
        nodes: usize,
        /// Episodes over all splits.
        #[arg(long)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        seen_worlds: usize,
        #[arg(long, default_value_t = 5)]
        unseen_worlds: usize,
        #[arg(long, value_enum, default_value_t = Mix::Stepwise)]
        instructions: Mix,
    },
    /// Train an agent and write a checkpoint plus a JSON-lines epoch log.
    Train {
        #[arg(long)]
        world: PathBuf,
        /// key = value file; omitted keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_ckpt: PathBuf,
        #[arg(long)]
        log: PathBuf,
    },
    /// Greedy rollouts on one split; writes trajectories and prints the report.
    Evaluate {
        #[arg(long)]
        world: PathBuf,
        /// Required for the model policy.
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        split: String,
        #[arg(long)]
        traj_out: PathBuf,
        /// Report JSON; defaults to the trajectory path with a `.report.json` suffix.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PolicyArg::Model)]
        policy: PolicyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a per-step table for one episode of a trajectory file.
    Replay {
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        episode: usize,
    },
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Usage(e.to_string()))?;
    execute(cli.command, out)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    writeln!(out, "{text}").map_err(|e| Error::io(Path::new("<stdout>"), e))
}

pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::GenerateWorld {
            seed,
            nodes,
            episodes,
            out: path,
            seen_worlds,
            unseen_worlds,
            instructions,
        } => {
            let config = DatasetConfig {
                seed,
                world: WorldConfig {
                    n_nodes: nodes,
                    ..WorldConfig::default()
                },
                seen_worlds,
                unseen_worlds,
                episodes,
                instructions: match instructions {
                    Mix::Stepwise => InstructionMix::Stepwise,
                    Mix::GoalOriented => InstructionMix::GoalOriented,
                    Mix::Alternating => InstructionMix::Alternating,
                },
                ..DatasetConfig::default()
            };
            let d = build_dataset(&config)?;
            worldfile::save(&path, &d)?;
            let count = |s| d.split(s).len();
            emit(
                out,
                &format!(
                    "worlds {} (seen {}, unseen {}) episodes {}: train {} val_seen {} val_unseen {}",
                    d.worlds.len(),
                    seen_worlds,
                    unseen_worlds,
                    d.episodes.len(),
                    count(Split::Train),
                    count(Split::ValSeen),
                    count(Split::ValUnseen)
                ),
            )
        }
        Command::Train {
            world,
            config,
            out_ckpt,
            log,
        } => {
            let d = worldfile::load(&world)?;
            let cfg = match config {
                Some(p) => RunConfig::parse(&records::read_text(&p)?)?,
                None => RunConfig::default(),
            };
            let mut agent = Agent::new(cfg.model.clone(), &d.vocab);
            let file = File::create(&log).map_err(|e| Error::io(&log, e))?;
            let mut log_out = BufWriter::new(file);
            let mut failure = None;
            let result = train(&mut agent, &d, &cfg.train, |l| {
                if failure.is_some() {
                    return;
                }
                let line = match records::to_line(&EpochLine::from(l)) {
                    Ok(s) => s,
                    Err(e) => {
                        failure = Some(e);
                        return;
                    }
                };
                if let Err(e) = writeln!(log_out, "{line}").and_then(|_| log_out.flush()) {
                    failure = Some(Error::io(&log, e));
                    return;
                }
                let _ = writeln!(out, "{line}");
            });
            if let Some(e) = failure {
                return Err(e);
            }
            result?;
            let bytes = checkpoint::save(&out_ckpt, &cfg, &agent.store)?;
            emit(out, &format!("checkpoint {} sha256 {}", out_ckpt.display(), checkpoint::checksum_hex(&bytes)))
        }
        Command::Evaluate {
            world,
            ckpt,
            split,
            traj_out,
            report,
            policy,
            seed,
        } => {
            let d = worldfile::load(&world)?;
            let split_v = Split::parse(&split).ok_or_else(|| Error::Usage(format!("unknown split {split:?}")))?;
            let mut settings = EvalSettings { seed, ..EvalSettings::default() };
            let agent = match (policy, ckpt) {
                (PolicyArg::Model, Some(p)) => {
                    let c = checkpoint::load(&p)?;
                    settings.obs_sigma = c.config.train.obs_sigma;
                    Some(c.into_agent(&d.vocab)?)
                }
                (PolicyArg::Model, None) => return Err(Error::Usage("--ckpt is required for the model policy".into())),
                _ => None,
            };
            let p = match (policy, agent.as_ref()) {
                (PolicyArg::Model, Some(a)) => Policy::Model(a),
                (PolicyArg::Expert, _) => Policy::Expert,
                _ => Policy::Random(seed),
            };
            let ev = evaluate(p, &d, split_v, &settings)?;
            let jsonl = records::trajectories_to_jsonl(&ev.trajectories)?;
            crate::error::write(&traj_out, jsonl.as_bytes())?;
            let record = EvaluationRecord {
                split: split_v.as_str().into(),
                policy: format!("{policy:?}").to_lowercase(),
                report: ReportRecord::from(&ev.report),
            };
            let rpath = report.unwrap_or_else(|| {
                let mut s = traj_out.clone().into_os_string();
                s.push(".report.json");
                PathBuf::from(s)
            });
            let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Format(e.to_string()))?;
            crate::error::write(&rpath, format!("{json}\n").as_bytes())?;
            let r = &ev.report;
            emit(
                out,
                &format!(
                    "{} {} episodes {}: SR {:.2} SPL {:.2} OSR {:.2} NE {:.3} TL {:.3} RGS {:.2} RGSPL {:.2}",
                    record.split, record.policy, r.episodes, r.sr, r.spl, r.osr, r.ne, r.tl, r.rgs, r.rgspl
                ),
            )
        }
        Command::Replay { world, traj, episode } => {
            let d = worldfile::load(&world)?;
            let ts = records::trajectories_from_jsonl(&records::read_text(&traj)?)?;
            let t = ts
                .iter()
                .find(|t| t.episode == episode)
                .ok_or_else(|| Error::Core(navfuse_core::Error::Argument(format!("episode {episode} is not in {}", traj.display()))))?;
            let e = d
                .episodes
                .iter()
                .find(|e| e.id == episode)
                .ok_or_else(|| Error::Core(navfuse_core::Error::Argument(format!("episode {episode} is not in {}", world.display()))))?;
            let g = d.world_of(e);
            for line in replay_rows(t, |n| d.vocab.concepts()[d.vocab.room_concept(g.node(n).room)].name.clone()) {
                emit(out, &line)?;
            }
            Ok(())
        }
    }
}

/// Top `k` views by weight, heaviest first; ties keep the lower index.
pub fn top_views(eta: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = eta.iter().copied().enumerate().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

/// One self-labelled row per step.
pub fn replay_rows(t: &navfuse_core::eval::Trajectory, room: impl Fn(usize) -> String) -> Vec<String> {
    let mut rows = Vec::new();
    for s in &t.steps {
        let top = top_views(&s.eta, 3)
            .iter()
            .map(|(v, w)| format!("v{v}:{w:.3}"))
            .collect::<Vec<_>>()
            .join(" ");
        let mut dist: Vec<String> = s
            .candidates
            .iter()
            .zip(&s.probs)
            .map(|(c, p)| format!("{c}:{p:.3}"))
            .collect();
        dist.push(format!("stop:{:.3}", s.stop_prob));
        let action = match s.action {
            Action::Stop => match t.grounded {
                Some(o) => format!("stop (object {o})"),
                None => "stop".into(),
            },
            Action::Move(m) => format!("move {m}"),
        };
        rows.push(format!(
            "step {} node {} ({}) | eta {} | probs {} | {}",
            s.step,
            s.node,
            room(s.node),
            top,
            dist.join(" "),
            action
        ));
    }
    rows
}
