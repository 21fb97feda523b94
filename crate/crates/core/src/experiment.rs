//! Training loop and run directories.
//!
//! A run directory holds:
//! - `config.toml`: the resolved config, enough to rerun the experiment
//! - `metrics.csv`: one row per `metrics_every` episodes
//! - `timing.csv`: wall-clock seconds at each metrics row
//! - `checkpoints/ep<N>.ckpt` and `final.ckpt`
//! - `summary.txt`
//!
//! Wall-clock lives in its own file so `metrics.csv` depends only on the
//! config and seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::algo::{run_episode, ActMode, EpisodeOptions, TeamLearner, UpdateStats};
use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::rng::RunStreams;

/// Averages over one block of `metrics_every` episodes. Loss columns
/// average the updates that happened in the block (0 if none did).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub reward_team0: f64,
    pub reward_team1: f64,
    pub mi_loss_team0: f64,
    pub mi_loss_team1: f64,
    pub policy_loss_team0: f64,
    pub policy_loss_team1: f64,
    pub critic_loss_team0: f64,
    pub critic_loss_team1: f64,
}

#[derive(Default)]
struct Block {
    episodes: usize,
    rewards: [f64; 2],
    updates: [usize; 2],
    stats: [UpdateStats; 2],
}

impl Block {
    fn add(&mut self, rewards: &[f64], updates: &[Option<UpdateStats>]) {
        self.episodes += 1;
        for t in 0..2 {
            self.rewards[t] += rewards[t];
            if let Some(s) = &updates[t] {
                self.updates[t] += 1;
                self.stats[t].mi_loss += s.mi_loss;
                self.stats[t].policy_loss += s.policy_loss;
                self.stats[t].critic_loss += s.critic_loss;
            }
        }
    }

    fn row(&self, episode: usize) -> MetricsRow {
        let n = self.episodes.max(1) as f64;
        let avg = |t: usize, f: fn(&UpdateStats) -> f64| {
            if self.updates[t] == 0 {
                0.0
            } else {
                f(&self.stats[t]) / self.updates[t] as f64
            }
        };
        MetricsRow {
            episode,
            reward_team0: self.rewards[0] / n,
            reward_team1: self.rewards[1] / n,
            mi_loss_team0: avg(0, |s| s.mi_loss),
            mi_loss_team1: avg(1, |s| s.mi_loss),
            policy_loss_team0: avg(0, |s| s.policy_loss),
            policy_loss_team1: avg(1, |s| s.policy_loss),
            critic_loss_team0: avg(0, |s| s.critic_loss),
            critic_loss_team1: avg(1, |s| s.critic_loss),
        }
    }
}

/// Result of an in-memory training run.
pub struct TrainedRun {
    pub config: ExperimentConfig,
    pub learners: Vec<Box<dyn TeamLearner>>,
    pub streams: RunStreams,
    pub metrics: Vec<MetricsRow>,
    /// Seconds since start at each metrics row.
    pub timing: Vec<f64>,
    pub episodes_done: usize,
}

impl TrainedRun {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::capture(
            self.config.to_toml(),
            self.episodes_done as u64,
            self.streams.states(),
            &self.learners,
        )
    }

    /// Mean reward per team over the last 10% of training.
    pub fn final_rewards(&self) -> [f64; 2] {
        final_rewards(&self.metrics, self.config.episodes)
    }
}

pub fn final_rewards(metrics: &[MetricsRow], episodes: usize) -> [f64; 2] {
    let start = episodes - episodes / 10;
    let tail: Vec<&MetricsRow> = metrics.iter().filter(|r| r.episode > start).collect();
    let tail = if tail.is_empty() {
        metrics.iter().rev().take(1).collect()
    } else {
        tail
    };
    let n = tail.len().max(1) as f64;
    [
        tail.iter().map(|r| r.reward_team0).sum::<f64>() / n,
        tail.iter().map(|r| r.reward_team1).sum::<f64>() / n,
    ]
}

/// Hooks called while training.
pub trait TrainObserver {
    fn on_metrics(&mut self, _row: &MetricsRow, _elapsed: f64) -> Result<()> {
        Ok(())
    }

    /// Called after `episode` episodes with a checkpoint-ready run.
    fn on_checkpoint(&mut self, _episode: usize, _run: &TrainingState<'_>) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Borrowed view of a run in progress.
pub struct TrainingState<'a> {
    pub config: &'a ExperimentConfig,
    pub learners: &'a [Box<dyn TeamLearner>],
    pub streams: &'a RunStreams,
}

impl TrainingState<'_> {
    pub fn checkpoint(&self, episode: usize) -> Checkpoint {
        Checkpoint::capture(self.config.to_toml(), episode as u64, self.streams.states(), self.learners)
    }
}

/// Trains in memory. With `resume`, parameters, optimizer states, RNG
/// streams and the episode counter come from the checkpoint. Replay
/// buffers and partially filled on-policy batches are not part of a
/// checkpoint.
pub fn train(config: &ExperimentConfig, resume: Option<&Checkpoint>, observer: &mut dyn TrainObserver) -> Result<TrainedRun> {
    config.validate()?;
    let mut env = config.build_env()?;
    let mut learners = config.build_learners()?;
    let mut streams = RunStreams::new(config.seed, 2);
    let mut start = 0;
    if let Some(ck) = resume {
        ck.apply(&mut learners)?;
        streams = RunStreams::from_states(&ck.rng, 2)
            .ok_or_else(|| Error::Checkpoint("random stream states missing".into()))?;
        start = ck.episode as usize;
        if start > config.episodes {
            return Err(Error::Checkpoint(format!(
                "checkpoint is at episode {start}, past the configured {}",
                config.episodes
            )));
        }
    }
    let learn: Vec<bool> = config.teams().iter().map(|t| t.frozen.is_none()).collect();
    let clock = Instant::now();
    let mut metrics = Vec::new();
    let mut timing = Vec::new();
    let mut block = Block::default();
    for episode in start..config.episodes {
        let opts = EpisodeOptions {
            episode,
            mode: ActMode::Explore {
                progress: episode as f64 / config.episodes as f64,
            },
            record_hidden: false,
        };
        let out = run_episode(env.as_mut(), &mut learners, &learn, &mut streams, opts)?;
        block.add(&out.team_rewards, &out.updates);
        let done = episode + 1;
        if done % config.metrics_every == 0 || done == config.episodes {
            let row = block.row(done);
            let elapsed = clock.elapsed().as_secs_f64();
            observer.on_metrics(&row, elapsed)?;
            metrics.push(row);
            timing.push(elapsed);
            block = Block::default();
        }
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.episodes {
            let state = TrainingState {
                config,
                learners: &learners,
                streams: &streams,
            };
            observer.on_checkpoint(done, &state)?;
        }
    }
    Ok(TrainedRun {
        config: config.clone(),
        learners,
        streams,
        metrics,
        timing,
        episodes_done: config.episodes,
    })
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub episodes: usize,
    /// Mean reward per team over the last 10% of episodes.
    pub final_rewards: [f64; 2],
}

struct DirObserver {
    dir: PathBuf,
    timing: Vec<(usize, f64)>,
}

impl TrainObserver for DirObserver {
    fn on_metrics(&mut self, row: &MetricsRow, elapsed: f64) -> Result<()> {
        self.timing.push((row.episode, elapsed));
        Ok(())
    }

    fn on_checkpoint(&mut self, episode: usize, run: &TrainingState<'_>) -> Result<()> {
        run.checkpoint(episode)
            .save(&self.dir.join("checkpoints").join(format!("ep{episode}.ckpt")))
    }
}

/// Trains and writes a run directory. With `resume`, metrics rows up to the
/// checkpoint's episode are kept from an existing `metrics.csv` in `out_dir`
/// and the rest are appended.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, resume: Option<&Path>) -> Result<RunSummary> {
    config.validate()?;
    let checkpoint = resume.map(Checkpoint::load).transpose()?;
    fs::create_dir_all(out_dir.join("checkpoints"))?;
    fs::write(out_dir.join("config.toml"), config.to_toml())?;

    let mut previous = Vec::new();
    if let Some(ck) = &checkpoint {
        let path = out_dir.join("metrics.csv");
        if path.exists() {
            previous = read_metrics(&path)?
                .into_iter()
                .filter(|r| r.episode as u64 <= ck.episode)
                .collect();
        }
    }
    let mut observer = DirObserver {
        dir: out_dir.to_path_buf(),
        timing: Vec::new(),
    };
    let run = train(config, checkpoint.as_ref(), &mut observer)?;
    let mut metrics = previous;
    metrics.extend(run.metrics.iter().cloned());
    write_metrics(&out_dir.join("metrics.csv"), &metrics)?;

    let mut timing = csv::Writer::from_path(out_dir.join("timing.csv")).map_err(csv_err)?;
    timing.write_record(["episode", "seconds"]).map_err(csv_err)?;
    for (e, s) in &observer.timing {
        timing.write_record([e.to_string(), format!("{s:.3}")]).map_err(csv_err)?;
    }
    timing.flush()?;

    run.checkpoint().save(&out_dir.join("final.ckpt"))?;
    let final_rewards = final_rewards(&metrics, config.episodes);
    let summary = RunSummary {
        out_dir: out_dir.to_path_buf(),
        episodes: config.episodes,
        final_rewards,
    };
    fs::write(
        out_dir.join("summary.txt"),
        format!(
            "scenario = {}\nteam0 = {}\nteam1 = {}\nseed = {}\nepisodes = {}\nfinal_reward_team0 = {}\nfinal_reward_team1 = {}\n",
            config.scenario.name(),
            config.team0.algorithm,
            config.team1.algorithm,
            config.seed,
            config.episodes,
            final_rewards[0],
            final_rewards[1]
        ),
    )?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::Algorithm;
    use crate::config::Scenario;

    #[test]
    fn final_rewards_average_last_tenth() {
        let rows: Vec<MetricsRow> = (1..=10)
            .map(|i| MetricsRow {
                episode: i * 10,
                reward_team0: i as f64,
                reward_team1: -(i as f64),
                mi_loss_team0: 0.0,
                mi_loss_team1: 0.0,
                policy_loss_team0: 0.0,
                policy_loss_team1: 0.0,
                critic_loss_team0: 0.0,
                critic_loss_team1: 0.0,
            })
            .collect();
        assert_eq!(final_rewards(&rows, 100), [10.0, -10.0]);
    }

    #[test]
    fn matrix_training_is_deterministic() {
        let mut c = ExperimentConfig::defaults(Scenario::Rpsw4Step, Algorithm::SicRe);
        c.episodes = 200;
        c.metrics_every = 20;
        let a = train(&c, None, &mut ()).unwrap();
        let b = train(&c, None, &mut ()).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.checkpoint().to_text(), b.checkpoint().to_text());
    }
}
