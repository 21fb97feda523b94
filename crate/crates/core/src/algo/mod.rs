//! Team learners: REINFORCE, MADDPG and COMA, each with an optional signal
//! coupling term.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamState, Mlp};
use crate::env::{CollisionEvent, Environment};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng, TeamStreams};
use crate::signal::Signal;

mod coma;
mod coupling;
mod maddpg;
mod policy;
mod reinforce;
mod replay;
mod returns;
mod rollout;

pub use coma::{coma_update, ComaTeam};
pub use coupling::{CouplingNodes, SignalCoupling};
pub use maddpg::{maddpg_update, MaddpgTeam};
pub use policy::{PolicyMode, PolicyNetwork};
pub use reinforce::{reinforce_update, ReinforceTeam};
pub use replay::{ReplayBuffer, Transition};
pub use returns::{coma_advantage, discounted_returns, gae_compute};
pub use rollout::{play_episode, run_episode, EpisodeOptions, EpisodeOutcome};

pub use policy::{argmax, sample_categorical, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    IndRe,
    SicRe,
    Maddpg,
    SicMa,
    Coma,
    SicComa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::IndRe,
        Algorithm::SicRe,
        Algorithm::Maddpg,
        Algorithm::SicMa,
        Algorithm::Coma,
        Algorithm::SicComa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::IndRe => "ind-re",
            Algorithm::SicRe => "sic-re",
            Algorithm::Maddpg => "maddpg",
            Algorithm::SicMa => "sic-ma",
            Algorithm::Coma => "coma",
            Algorithm::SicComa => "sic-coma",
        }
    }

    pub fn is_sic(self) -> bool {
        matches!(self, Algorithm::SicRe | Algorithm::SicMa | Algorithm::SicComa)
    }

    /// The algorithm without the signal.
    pub fn base(self) -> Algorithm {
        match self {
            Algorithm::SicRe => Algorithm::IndRe,
            Algorithm::SicMa => Algorithm::Maddpg,
            Algorithm::SicComa => Algorithm::Coma,
            other => other,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
    }
}

/// Hyperparameters of one team's learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_unet: f64,
    /// Weight of the coupling loss.
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Episodes per update (REINFORCE), transitions per update (COMA) or
    /// minibatch size (MADDPG).
    pub batch_size: usize,
    pub signal_dim: usize,
    pub gumbel_temperature: f64,
    pub target_update_rate: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub unet_hidden: Vec<usize>,
    pub critic_uses_signal: bool,
    pub replay_capacity: usize,
    pub warmup: usize,
    pub update_every: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
}

impl TrainConfig {
    /// Matrix-game defaults: Adam 1e-4, 8-unit policy, 8-8 reconstruction
    /// net, α = 0.01 and a 2-dimensional signal for SIC variants.
    pub fn matrix_defaults(algorithm: Algorithm) -> Self {
        let sic = algorithm.is_sic();
        let mut c = Self {
            lr_actor: 1e-4,
            lr_critic: 1e-4,
            lr_unet: 1e-4,
            alpha: if sic { 0.01 } else { 0.0 },
            gamma: 0.99,
            lambda: 0.8,
            batch_size: 1,
            signal_dim: if sic { 2 } else { 0 },
            gumbel_temperature: 1.0,
            target_update_rate: 0.01,
            clip_norm: 0.0,
            policy_hidden: vec![8],
            critic_hidden: vec![64, 64],
            unet_hidden: vec![8, 8],
            critic_uses_signal: true,
            replay_capacity: 1_000_000,
            warmup: 1024,
            update_every: 100,
            epsilon_start: 0.3,
            epsilon_end: 0.05,
        };
        if matches!(algorithm.base(), Algorithm::Coma) {
            c.lr_actor = 5e-5;
            c.lr_critic = 5e-5;
            c.clip_norm = 0.1;
            c.batch_size = 1000;
        }
        c
    }

    /// Predator-prey defaults for a `team_size`-vs-`team_size` game.
    pub fn predator_prey_defaults(algorithm: Algorithm, team_size: usize) -> Self {
        let sic = algorithm.is_sic();
        let large = team_size >= 4;
        let mut c = Self {
            lr_actor: 1e-3,
            lr_critic: 1e-3,
            lr_unet: 1e-3,
            alpha: 0.0,
            gamma: 0.95,
            lambda: 0.8,
            batch_size: 1024,
            signal_dim: if sic { 20 } else { 0 },
            gumbel_temperature: 1.0,
            target_update_rate: 0.01,
            clip_norm: 0.5,
            policy_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            unet_hidden: vec![64],
            critic_uses_signal: true,
            replay_capacity: 1_000_000,
            warmup: 1024,
            update_every: 100,
            epsilon_start: 0.3,
            epsilon_end: 0.05,
        };
        match algorithm.base() {
            Algorithm::Maddpg => {
                let lr = if sic || large { 5e-4 } else { 1e-3 };
                c.lr_actor = lr;
                c.lr_critic = lr;
                c.lr_unet = lr;
                if sic {
                    c.alpha = if large { 0.01 } else { 1e-4 };
                }
            }
            Algorithm::Coma => {
                c.lr_actor = 5e-5;
                c.lr_critic = 5e-5;
                c.lr_unet = 5e-5;
                c.clip_norm = 0.1;
                c.gamma = 0.99;
                c.batch_size = 1000;
                if sic {
                    c.alpha = 1e-4;
                }
            }
            _ => {
                c.batch_size = 1;
                c.clip_norm = 0.0;
                if sic {
                    c.alpha = 1e-4;
                }
            }
        }
        c
    }

    pub fn clip(&self) -> Option<f64> {
        (self.clip_norm > 0.0).then_some(self.clip_norm)
    }

    pub fn validate(&self, algorithm: Algorithm) -> Result<()> {
        for (name, lr) in [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_unet", self.lr_unet),
        ] {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.gumbel_temperature > 0.0) {
            return Err(Error::Config("gumbel_temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.target_update_rate) {
            return Err(Error::Config("target_update_rate must lie in [0, 1]".into()));
        }
        if !(self.clip_norm >= 0.0) {
            return Err(Error::Config("clip_norm must be non-negative".into()));
        }
        if self.policy_hidden.is_empty() || self.policy_hidden.contains(&0) {
            return Err(Error::Config("policy_hidden needs at least one positive width".into()));
        }
        if self.critic_hidden.contains(&0) || self.unet_hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if self.update_every == 0 {
            return Err(Error::Config("update_every must be positive".into()));
        }
        if !algorithm.is_sic() && (self.signal_dim > 0 || self.alpha > 0.0) {
            return Err(Error::Config(format!(
                "{algorithm} has no signal; signal_dim and alpha must be 0"
            )));
        }
        Ok(())
    }
}

/// Static description of the team a learner controls.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamSpec {
    pub team: usize,
    pub agents: Range<usize>,
    /// Observation width of every agent in the game, not only this team.
    pub obs_dims: Vec<usize>,
    pub n_actions: usize,
}

impl TeamSpec {
    pub fn from_env(env: &dyn Environment, team: usize) -> Self {
        Self {
            team,
            agents: env.teams()[team].clone(),
            obs_dims: (0..env.n_agents()).map(|i| env.obs_dim(i)).collect(),
            n_actions: env.n_actions(),
        }
    }

    pub fn team_obs_dim(&self) -> usize {
        self.agents.clone().map(|i| self.obs_dims[i]).sum()
    }

    pub fn global_obs_dim(&self) -> usize {
        self.obs_dims.iter().sum()
    }

    pub fn n_team(&self) -> usize {
        self.agents.len()
    }

    /// Offset of `agent` in the concatenated global observation.
    pub fn obs_offset(&self, agent: usize) -> usize {
        self.obs_dims[..agent].iter().sum()
    }

    pub(crate) fn init_rng(&self, master_seed: u64, label: &str) -> StreamRng {
        stream(master_seed, &format!("team{}/init/{label}", self.team))
    }
}

/// How a learner picks actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActMode {
    /// Training-time behaviour; `progress` is the fraction of training done.
    Explore { progress: f64 },
    /// Sample stochastic policies, argmax deterministic ones.
    Sample,
    /// Argmax everywhere.
    Greedy,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub critic_loss: f64,
    pub mi_loss: f64,
}

/// One environment transition as seen by a team.
#[derive(Debug, Clone, Copy)]
pub struct StepView<'a> {
    pub obs: &'a [Vec<f64>],
    pub actions: &'a [usize],
    pub rewards: &'a [f64],
    pub next_obs: &'a [Vec<f64>],
    pub done: bool,
    pub signal: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryStep {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    /// Last hidden vector of every agent's policy (empty unless recorded).
    pub hiddens: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// Everything that happened in one episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub episode: usize,
    /// One signal per team, constant for the episode.
    pub signals: Vec<Signal>,
    pub steps: Vec<TrajectoryStep>,
    pub final_observations: Vec<Vec<f64>>,
    pub collisions: Vec<(usize, CollisionEvent)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn agent_rewards(&self, agent: usize) -> Vec<f64> {
        self.steps.iter().map(|s| s.rewards[agent]).collect()
    }
}

/// A named network exposed for checkpointing.
pub struct NetRef<'a> {
    pub name: String,
    pub net: &'a Mlp,
    pub adam: Option<&'a AdamState>,
}

pub struct NetMut<'a> {
    pub name: String,
    pub net: &'a mut Mlp,
    pub adam: Option<&'a mut AdamState>,
}

/// A learner controlling one team of agents.
pub trait TeamLearner: Send + Sync {
    fn algorithm(&self) -> Algorithm;

    fn spec(&self) -> &TeamSpec;

    fn signal_dim(&self) -> usize;

    fn policies(&self) -> &[PolicyNetwork];

    fn coupling(&self) -> Option<&SignalCoupling>;

    /// Actions and last hidden vectors for the team's agents. `obs` holds
    /// every agent's observation.
    fn act(
        &self,
        obs: &[Vec<f64>],
        signal: &Signal,
        rng: &mut StreamRng,
        mode: ActMode,
    ) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
        act_with_policies(self.policies(), &self.spec().agents, obs, signal, rng, mode, 0.0)
    }

    /// Called after every environment step while training.
    fn observe_step(
        &mut self,
        _step: &StepView<'_>,
        _streams: &mut TeamStreams,
    ) -> Result<Option<UpdateStats>> {
        Ok(None)
    }

    /// Called once per finished episode while training.
    fn end_episode(&mut self, _traj: &Trajectory, _streams: &mut TeamStreams) -> Result<Option<UpdateStats>> {
        Ok(None)
    }

    fn networks(&self) -> Vec<NetRef<'_>>;

    fn networks_mut(&mut self) -> Vec<NetMut<'_>>;
}

pub(crate) fn act_with_policies(
    policies: &[PolicyNetwork],
    agents: &Range<usize>,
    obs: &[Vec<f64>],
    signal: &Signal,
    rng: &mut StreamRng,
    mode: ActMode,
    epsilon: f64,
) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    use rand::Rng;
    let mut actions = Vec::with_capacity(policies.len());
    let mut hiddens = Vec::with_capacity(policies.len());
    for (policy, agent) in policies.iter().zip(agents.clone()) {
        let (probs, hidden) = policy.distribution(&obs[agent], &signal.values)?;
        let action = match (policy.mode, mode) {
            (_, ActMode::Greedy) => argmax(&probs),
            (PolicyMode::StochasticSoftmax, _) => sample_categorical(&probs, rng),
            (PolicyMode::DeterministicGumbel, ActMode::Sample) => argmax(&probs),
            (PolicyMode::DeterministicGumbel, ActMode::Explore { .. }) => {
                if rng.random::<f64>() < epsilon {
                    rng.random_range(0..probs.len())
                } else {
                    argmax(&probs)
                }
            }
        };
        actions.push(action);
        hiddens.push(hidden);
    }
    Ok((actions, hiddens))
}

pub(crate) fn policy_refs<'a>(team: usize, policies: &'a [PolicyNetwork]) -> Vec<NetRef<'a>> {
    policies
        .iter()
        .enumerate()
        .map(|(k, p)| NetRef {
            name: format!("team{team}/policy{k}"),
            net: &p.model.net,
            adam: Some(&p.model.adam),
        })
        .collect()
}

pub(crate) fn policy_muts<'a>(team: usize, policies: &'a mut [PolicyNetwork]) -> Vec<NetMut<'a>> {
    policies
        .iter_mut()
        .enumerate()
        .map(|(k, p)| NetMut {
            name: format!("team{team}/policy{k}"),
            net: &mut p.model.net,
            adam: Some(&mut p.model.adam),
        })
        .collect()
}

pub(crate) fn coupling_ref(team: usize, c: &SignalCoupling) -> NetRef<'_> {
    NetRef {
        name: format!("team{team}/unet"),
        net: &c.unet.net,
        adam: Some(&c.adam),
    }
}

pub(crate) fn coupling_mut(team: usize, c: &mut SignalCoupling) -> NetMut<'_> {
    NetMut {
        name: format!("team{team}/unet"),
        net: &mut c.unet.net,
        adam: Some(&mut c.adam),
    }
}

/// Builds the learner for `algorithm` on `spec`, drawing initial weights
/// from streams derived from `master_seed`.
pub fn build_learner(
    algorithm: Algorithm,
    spec: TeamSpec,
    config: &TrainConfig,
    master_seed: u64,
) -> Result<Box<dyn TeamLearner>> {
    config.validate(algorithm)?;
    Ok(match algorithm.base() {
        Algorithm::IndRe => Box::new(ReinforceTeam::new(algorithm, spec, config.clone(), master_seed)?),
        Algorithm::Maddpg => Box::new(MaddpgTeam::new(algorithm, spec, config.clone(), master_seed)?),
        Algorithm::Coma => Box::new(ComaTeam::new(algorithm, spec, config.clone(), master_seed)?),
        _ => unreachable!("base() only returns base algorithms"),
    })
}

/// Builds the optional coupling module for a team.
pub(crate) fn build_coupling(
    spec: &TeamSpec,
    config: &TrainConfig,
    policies: &[PolicyNetwork],
    master_seed: u64,
) -> Result<Option<SignalCoupling>> {
    if config.signal_dim == 0 {
        return Ok(None);
    }
    let hidden_dims: Vec<usize> = policies.iter().map(PolicyNetwork::hidden_dim).collect();
    let mut rng = spec.init_rng(master_seed, "unet");
    Ok(Some(SignalCoupling::new(
        spec.team_obs_dim(),
        &hidden_dims,
        &config.unet_hidden,
        config.signal_dim,
        config.alpha,
        &mut rng,
    )?))
}

pub(crate) fn one_hot_rows(actions: &[usize], n_actions: usize) -> Vec<f64> {
    let mut out = vec![0.0; actions.len() * n_actions];
    for (r, &a) in actions.iter().enumerate() {
        out[r * n_actions + a] = 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algorithm_names_roundtrip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("dqn".parse::<Algorithm>().is_err());
    }

    #[test]
    fn defaults_validate() {
        for a in Algorithm::ALL {
            TrainConfig::matrix_defaults(a).validate(a).unwrap();
            TrainConfig::predator_prey_defaults(a, 2).validate(a).unwrap();
        }
        let sic_ma = TrainConfig::predator_prey_defaults(Algorithm::SicMa, 2);
        assert_eq!((sic_ma.lr_actor, sic_ma.signal_dim, sic_ma.alpha), (5e-4, 20, 1e-4));
        let ma = TrainConfig::predator_prey_defaults(Algorithm::Maddpg, 2);
        assert_eq!(ma.lr_actor, 1e-3);
        let sic4 = TrainConfig::predator_prey_defaults(Algorithm::SicMa, 4);
        assert_eq!((sic4.lr_actor, sic4.alpha), (5e-4, 0.01));
    }

    #[test]
    fn base_algorithm_rejects_signal() {
        let mut c = TrainConfig::matrix_defaults(Algorithm::IndRe);
        c.signal_dim = 2;
        assert!(matches!(c.validate(Algorithm::IndRe), Err(Error::Config(_))));
    }
}
