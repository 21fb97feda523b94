//! Episode driver shared by training and evaluation.

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::RunStreams;
use crate::signal::{sample_signal, Signal};

use super::{ActMode, StepView, TeamLearner, Trajectory, TrajectoryStep, UpdateStats};

#[derive(Debug, Clone, Copy)]
pub struct EpisodeOptions {
    pub episode: usize,
    pub mode: ActMode,
    /// Keep every agent's last hidden vector in the trajectory.
    pub record_hidden: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    /// Per team: summed reward over the episode, averaged over teammates.
    pub team_rewards: Vec<f64>,
    /// Per team: statistics of any update triggered during the episode.
    pub updates: Vec<Option<UpdateStats>>,
}

/// Access to the learners of every team during one episode.
trait Teams {
    fn count(&self) -> usize;
    fn get(&self, team: usize) -> &dyn TeamLearner;
    fn observe(&mut self, team: usize, view: &StepView<'_>, streams: &mut RunStreams) -> Result<Option<UpdateStats>>;
    fn finish(&mut self, team: usize, traj: &Trajectory, streams: &mut RunStreams) -> Result<Option<UpdateStats>>;
}

struct Training<'a> {
    learners: &'a mut [Box<dyn TeamLearner>],
    learn: &'a [bool],
}

impl Teams for Training<'_> {
    fn count(&self) -> usize {
        self.learners.len()
    }

    fn get(&self, team: usize) -> &dyn TeamLearner {
        self.learners[team].as_ref()
    }

    fn observe(&mut self, team: usize, view: &StepView<'_>, streams: &mut RunStreams) -> Result<Option<UpdateStats>> {
        if self.learn[team] {
            self.learners[team].observe_step(view, &mut streams.teams[team])
        } else {
            Ok(None)
        }
    }

    fn finish(&mut self, team: usize, traj: &Trajectory, streams: &mut RunStreams) -> Result<Option<UpdateStats>> {
        if self.learn[team] {
            self.learners[team].end_episode(traj, &mut streams.teams[team])
        } else {
            Ok(None)
        }
    }
}

struct Frozen<'a> {
    learners: &'a [&'a dyn TeamLearner],
}

impl Teams for Frozen<'_> {
    fn count(&self) -> usize {
        self.learners.len()
    }

    fn get(&self, team: usize) -> &dyn TeamLearner {
        self.learners[team]
    }

    fn observe(&mut self, _: usize, _: &StepView<'_>, _: &mut RunStreams) -> Result<Option<UpdateStats>> {
        Ok(None)
    }

    fn finish(&mut self, _: usize, _: &Trajectory, _: &mut RunStreams) -> Result<Option<UpdateStats>> {
        Ok(None)
    }
}

fn check_dims(env: &dyn Environment, teams: &dyn Teams) -> Result<()> {
    let ranges = env.teams();
    if ranges.len() != teams.count() {
        return Err(Error::Config(format!(
            "environment has {} teams, {} learners given",
            ranges.len(),
            teams.count()
        )));
    }
    for (t, range) in ranges.iter().enumerate() {
        let learner = teams.get(t);
        if learner.spec().agents != *range {
            return Err(Error::Config(format!("team {t} learner controls the wrong agents")));
        }
        for (p, agent) in learner.policies().iter().zip(range.clone()) {
            if p.obs_dim != env.obs_dim(agent) || p.n_actions() != env.n_actions() {
                return Err(Error::Config(format!(
                    "agent {agent}: policy takes {} inputs and has {} actions, environment gives {} and {}",
                    p.obs_dim,
                    p.n_actions(),
                    env.obs_dim(agent),
                    env.n_actions()
                )));
            }
        }
    }
    Ok(())
}

fn drive(env: &mut dyn Environment, teams: &mut dyn Teams, streams: &mut RunStreams, opts: EpisodeOptions) -> Result<EpisodeOutcome> {
    check_dims(env, teams)?;
    let n_teams = teams.count();
    let signals: Vec<Signal> = (0..n_teams)
        .map(|t| sample_signal(teams.get(t).signal_dim(), &mut streams.teams[t].signal))
        .collect();
    let mut obs = env.reset(&mut streams.env)?;
    let n_agents = env.n_agents();
    let mut traj = Trajectory {
        episode: opts.episode,
        signals,
        ..Trajectory::default()
    };
    let mut updates: Vec<Option<UpdateStats>> = vec![None; n_teams];
    let ranges = env.teams();
    loop {
        let mut actions = vec![0usize; n_agents];
        let mut hiddens = vec![Vec::new(); n_agents];
        for (t, range) in ranges.iter().enumerate() {
            let (a, mut h) = teams
                .get(t)
                .act(&obs, &traj.signals[t], &mut streams.teams[t].action, opts.mode)?;
            for (k, agent) in range.clone().enumerate() {
                actions[agent] = a[k];
                if opts.record_hidden {
                    hiddens[agent] = std::mem::take(&mut h[k]);
                }
            }
        }
        let result = env.step(&actions, &mut streams.env)?;
        for t in 0..n_teams {
            let view = StepView {
                obs: &obs,
                actions: &actions,
                rewards: &result.rewards,
                next_obs: &result.observations,
                done: result.done,
                signal: &traj.signals[t].values,
            };
            if let Some(s) = teams.observe(t, &view, streams)? {
                updates[t] = Some(s);
            }
        }
        let step_index = traj.steps.len();
        traj.collisions.extend(result.collisions.iter().map(|c| (step_index, c.clone())));
        traj.steps.push(TrajectoryStep {
            observations: std::mem::replace(&mut obs, result.observations),
            actions,
            hiddens,
            rewards: result.rewards,
            done: result.done,
        });
        if result.done || traj.steps.len() >= env.episode_length() {
            break;
        }
    }
    traj.final_observations = obs;
    for (t, slot) in updates.iter_mut().enumerate() {
        if let Some(s) = teams.finish(t, &traj, streams)? {
            *slot = Some(s);
        }
    }
    let team_rewards = ranges
        .iter()
        .map(|r| {
            let total: f64 = traj.steps.iter().map(|s| r.clone().map(|a| s.rewards[a]).sum::<f64>()).sum();
            total / r.len() as f64
        })
        .collect();
    Ok(EpisodeOutcome {
        trajectory: traj,
        team_rewards,
        updates,
    })
}

/// Plays one episode. Teams with `learn[t]` set receive every transition and
/// the finished trajectory; the others only act.
pub fn run_episode(
    env: &mut dyn Environment,
    learners: &mut [Box<dyn TeamLearner>],
    learn: &[bool],
    streams: &mut RunStreams,
    opts: EpisodeOptions,
) -> Result<EpisodeOutcome> {
    if learn.len() != learners.len() {
        return Err(Error::Config(format!(
            "{} learn flags for {} learners",
            learn.len(),
            learners.len()
        )));
    }
    drive(env, &mut Training { learners, learn }, streams, opts)
}

/// Plays one episode with read-only learners.
pub fn play_episode(
    env: &mut dyn Environment,
    learners: &[&dyn TeamLearner],
    streams: &mut RunStreams,
    opts: EpisodeOptions,
) -> Result<EpisodeOutcome> {
    drive(env, &mut Frozen { learners }, streams, opts)
}
