//! Experiment configuration.
//!
//! A config is a TOML document:
//!
//! ```toml
//! scenario = "predator-prey"   # rpsw-1step | rpsw-4step | predator-prey
//! algorithm = "sic-ma"         # default for both teams
//! seed = 3
//! episodes = 3000
//!
//! [train]                      # overrides for both teams
//! lr = 5e-4                    # shorthand for every learning rate
//!
//! [team1]
//! algorithm = "maddpg"
//! frozen = "runs/prey/final.ckpt"
//!
//! [team1.train]
//! gamma = 0.9
//!
//! [world]                      # predator-prey constants
//! team_size = 2
//! ```
//!
//! Missing values take the defaults of the scenario and algorithm. The
//! resolved config serializes back to the same format with every value
//! spelled out, so a run directory's snapshot reproduces the run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algo::{build_learner, Algorithm, TeamLearner, TeamSpec, TrainConfig};
use crate::checkpoint::Checkpoint;
use crate::env::{Environment, MultiStepGame, OneStepRpsw, ParticleConfig, PredatorPrey};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    #[serde(rename = "rpsw-1step")]
    Rpsw1Step,
    #[serde(rename = "rpsw-4step")]
    Rpsw4Step,
    PredatorPrey,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Rpsw1Step => "rpsw-1step",
            Scenario::Rpsw4Step => "rpsw-4step",
            Scenario::PredatorPrey => "predator-prey",
        }
    }

    pub fn is_matrix(self) -> bool {
        !matches!(self, Scenario::PredatorPrey)
    }

    pub fn default_algorithm(self) -> Algorithm {
        if self.is_matrix() {
            Algorithm::SicRe
        } else {
            Algorithm::SicMa
        }
    }

    pub fn default_episodes(self) -> usize {
        if self.is_matrix() {
            100_000
        } else {
            3000
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrain {
    lr: Option<f64>,
    lr_actor: Option<f64>,
    lr_critic: Option<f64>,
    lr_unet: Option<f64>,
    alpha: Option<f64>,
    gamma: Option<f64>,
    lambda: Option<f64>,
    batch_size: Option<usize>,
    signal_dim: Option<usize>,
    gumbel_temperature: Option<f64>,
    target_update_rate: Option<f64>,
    clip_norm: Option<f64>,
    policy_hidden: Option<Vec<usize>>,
    critic_hidden: Option<Vec<usize>>,
    unet_hidden: Option<Vec<usize>>,
    critic_uses_signal: Option<bool>,
    replay_capacity: Option<usize>,
    warmup: Option<usize>,
    update_every: Option<usize>,
    epsilon_start: Option<f64>,
    epsilon_end: Option<f64>,
}

impl RawTrain {
    fn apply(&self, c: &mut TrainConfig) {
        if let Some(lr) = self.lr {
            c.lr_actor = lr;
            c.lr_critic = lr;
            c.lr_unet = lr;
        }
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    c.$f = v.clone();
                }
            )*};
        }
        set!(
            lr_actor, lr_critic, lr_unet, alpha, gamma, lambda, batch_size, signal_dim,
            gumbel_temperature, target_update_rate, clip_norm, policy_hidden, critic_hidden,
            unet_hidden, critic_uses_signal, replay_capacity, warmup, update_every, epsilon_start,
            epsilon_end
        );
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTeam {
    algorithm: Option<Algorithm>,
    frozen: Option<PathBuf>,
    train: Option<RawTrain>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<Scenario>,
    algorithm: Option<Algorithm>,
    seed: Option<u64>,
    episodes: Option<usize>,
    out: Option<PathBuf>,
    metrics_every: Option<usize>,
    checkpoint_every: Option<usize>,
    train: Option<RawTrain>,
    team0: Option<RawTeam>,
    team1: Option<RawTeam>,
    world: Option<ParticleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TeamConfig {
    pub algorithm: Algorithm,
    /// Checkpoint to load this team from; a frozen team never learns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frozen: Option<PathBuf>,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub episodes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Episodes per metrics row.
    pub metrics_every: usize,
    /// Episodes between checkpoints; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub team0: TeamConfig,
    pub team1: TeamConfig,
    pub world: ParticleConfig,
}

/// Appendix-style defaults for one team.
pub fn default_train(scenario: Scenario, algorithm: Algorithm, world: &ParticleConfig) -> TrainConfig {
    if scenario.is_matrix() {
        TrainConfig::matrix_defaults(algorithm)
    } else {
        TrainConfig::predator_prey_defaults(algorithm, world.team_size)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        let scenario = raw.scenario.unwrap_or(Scenario::Rpsw1Step);
        let world = raw.world.clone().unwrap_or_default();
        let team = |t: &Option<RawTeam>| -> TeamConfig {
            let t = t.clone().unwrap_or_default();
            let algorithm = t.algorithm.or(raw.algorithm).unwrap_or(scenario.default_algorithm());
            let mut train = default_train(scenario, algorithm, &world);
            if let Some(g) = &raw.train {
                g.apply(&mut train);
            }
            if let Some(own) = &t.train {
                own.apply(&mut train);
            }
            TeamConfig {
                algorithm,
                frozen: t.frozen,
                train,
            }
        };
        let config = Self {
            scenario,
            seed: raw.seed.unwrap_or(0),
            episodes: raw.episodes.unwrap_or(scenario.default_episodes()),
            out: raw.out.clone(),
            metrics_every: raw.metrics_every.unwrap_or(if scenario.is_matrix() { 100 } else { 10 }),
            checkpoint_every: raw.checkpoint_every.unwrap_or(0),
            team0: team(&raw.team0),
            team1: team(&raw.team1),
            world,
        };
        config.validate()?;
        Ok(config)
    }

    /// Defaults for a scenario with the same algorithm on both teams.
    pub fn defaults(scenario: Scenario, algorithm: Algorithm) -> Self {
        let world = ParticleConfig::default();
        let team = TeamConfig {
            algorithm,
            frozen: None,
            train: default_train(scenario, algorithm, &world),
        };
        Self {
            scenario,
            seed: 0,
            episodes: scenario.default_episodes(),
            out: None,
            metrics_every: if scenario.is_matrix() { 100 } else { 10 },
            checkpoint_every: 0,
            team0: team.clone(),
            team1: team,
            world,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn teams(&self) -> [&TeamConfig; 2] {
        [&self.team0, &self.team1]
    }

    pub fn teams_mut(&mut self) -> [&mut TeamConfig; 2] {
        [&mut self.team0, &mut self.team1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be positive".into()));
        }
        if self.metrics_every == 0 {
            return Err(Error::Config("metrics_every must be positive".into()));
        }
        if !self.scenario.is_matrix() {
            self.world.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        for (t, team) in self.teams().into_iter().enumerate() {
            if matches!(team.algorithm.base(), Algorithm::Maddpg) && self.scenario.is_matrix() {
                return Err(Error::Config(format!(
                    "team{t}: {} needs the predator-prey scenario",
                    team.algorithm
                )));
            }
            team.train
                .validate(team.algorithm)
                .map_err(|e| Error::Config(format!("team{t}: {e}")))?;
        }
        Ok(())
    }

    pub fn build_env(&self) -> Result<Box<dyn Environment + Send>> {
        Ok(match self.scenario {
            Scenario::Rpsw1Step => Box::new(OneStepRpsw::new()),
            Scenario::Rpsw4Step => Box::new(MultiStepGame::new()),
            Scenario::PredatorPrey => Box::new(PredatorPrey::new(self.world.clone())?),
        })
    }

    /// Freshly initialized learners for both teams.
    pub fn build_untrained_learners(&self) -> Result<Vec<Box<dyn TeamLearner>>> {
        let env = self.build_env()?;
        self.teams()
            .into_iter()
            .enumerate()
            .map(|(t, team)| build_learner(team.algorithm, TeamSpec::from_env(env.as_ref(), t), &team.train, self.seed))
            .collect()
    }

    /// Learners for both teams, with frozen teams loaded from their
    /// checkpoints.
    pub fn build_learners(&self) -> Result<Vec<Box<dyn TeamLearner>>> {
        let mut out = self.build_untrained_learners()?;
        for (learner, team) in out.iter_mut().zip(self.teams()) {
            if let Some(path) = &team.frozen {
                Checkpoint::load(path)?.apply_to(learner.as_mut())?;
            }
        }
        Ok(out)
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_toml(&text)
}
