//! MADDPG with discrete actions via the Gumbel-softmax relaxation, and the
//! signal coupled variant SIC-MA.
//!
//! Each team is its own learner. A critic sees every agent's observation,
//! the actions of its own team and, optionally, the team signal; the other
//! team is treated as part of the environment.

use crate::autodiff::{gumbel_noise, gumbel_softmax_tape, Activation, Mlp, MlpSpec, OutputActivation, Tape, Trainable};
use crate::error::Result;
use crate::rng::{StreamRng, TeamStreams};
use crate::signal::Signal;

use super::{
    act_with_policies, argmax, build_coupling, coupling_mut, coupling_ref, one_hot_rows,
    policy_muts, policy_refs, ActMode, Algorithm, NetMut, NetRef, PolicyMode, PolicyNetwork,
    ReplayBuffer, SignalCoupling, StepView, TeamLearner, TeamSpec, TrainConfig, Transition,
    UpdateStats,
};

/// Weight of the logit penalty on the actor objective.
const LOGIT_PENALTY: f64 = 1e-3;

pub struct MaddpgTeam {
    algorithm: Algorithm,
    spec: TeamSpec,
    config: TrainConfig,
    actors: Vec<PolicyNetwork>,
    target_actors: Vec<Mlp>,
    critics: Vec<Trainable>,
    target_critics: Vec<Mlp>,
    coupling: Option<SignalCoupling>,
    buffer: ReplayBuffer,
    steps: u64,
}

fn critic_signal_dim(config: &TrainConfig) -> usize {
    if config.critic_uses_signal {
        config.signal_dim
    } else {
        0
    }
}

impl MaddpgTeam {
    pub fn new(algorithm: Algorithm, spec: TeamSpec, config: TrainConfig, master_seed: u64) -> Result<Self> {
        let mut actors = Vec::with_capacity(spec.n_team());
        let mut critics = Vec::with_capacity(spec.n_team());
        let critic_in = spec.global_obs_dim() + spec.n_team() * spec.n_actions + critic_signal_dim(&config);
        for (k, agent) in spec.agents.clone().enumerate() {
            let mut rng = spec.init_rng(master_seed, &format!("policy{k}"));
            actors.push(PolicyNetwork::new(
                agent,
                PolicyMode::DeterministicGumbel,
                spec.obs_dims[agent],
                config.signal_dim,
                &config.policy_hidden,
                spec.n_actions,
                &mut rng,
            )?);
            let mut rng = spec.init_rng(master_seed, &format!("critic{k}"));
            let cspec = MlpSpec::new(critic_in, &config.critic_hidden, 1, Activation::Relu, OutputActivation::Identity);
            critics.push(Trainable::new(Mlp::new(cspec, &mut rng)?));
        }
        let coupling = build_coupling(&spec, &config, &actors, master_seed)?;
        Ok(Self {
            algorithm,
            target_actors: actors.iter().map(|a| a.model.net.clone()).collect(),
            target_critics: critics.iter().map(|c| c.net.clone()).collect(),
            buffer: ReplayBuffer::new(config.replay_capacity),
            spec,
            config,
            actors,
            critics,
            coupling,
            steps: 0,
        })
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn critics(&self) -> &[Trainable] {
        &self.critics
    }

    pub fn target_critics(&self) -> &[Mlp] {
        &self.target_critics
    }

    pub fn target_actors(&self) -> &[Mlp] {
        &self.target_actors
    }

    /// Stores a transition without triggering an update.
    pub fn push_transition(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    fn epsilon(&self, progress: f64) -> f64 {
        let frac = (progress / 0.5).clamp(0.0, 1.0);
        self.config.epsilon_start + (self.config.epsilon_end - self.config.epsilon_start) * frac
    }

    /// One gradient step on every critic and actor of the team, then a soft
    /// target update.
    pub fn update(&mut self, rng: &mut StreamRng) -> Result<UpdateStats> {
        maddpg_update(self, rng)
    }
}

/// Samples a minibatch and updates critics, actors, the coupling module and
/// the targets. Fails with `NotReady` if the buffer holds fewer than
/// `batch_size` transitions.
pub fn maddpg_update(team: &mut MaddpgTeam, rng: &mut StreamRng) -> Result<UpdateStats> {
    let cfg = &team.config;
    let spec = &team.spec;
    let idx = team.buffer.sample_indices(cfg.batch_size, rng)?;
    let b = idx.len();
    let n_team = spec.n_team();
    let n_act = spec.n_actions;
    let g = spec.global_obs_dim();
    let dz = cfg.signal_dim;
    let cdz = critic_signal_dim(cfg);

    let batch: Vec<&Transition> = idx.iter().map(|&i| team.buffer.get(i)).collect();
    let obs: Vec<f64> = batch.iter().flat_map(|t| t.obs.iter().copied()).collect();
    let next_obs: Vec<f64> = batch.iter().flat_map(|t| t.next_obs.iter().copied()).collect();
    let signals: Vec<f64> = batch.iter().flat_map(|t| t.signal.iter().copied()).collect();
    let actions: Vec<f64> = batch
        .iter()
        .flat_map(|t| one_hot_rows(&t.actions, n_act))
        .collect();

    // Slices `rows × width` out of the global observation for one agent.
    let agent_input = |source: &[f64], agent: usize| -> Vec<f64> {
        let off = spec.obs_offset(agent);
        let w = spec.obs_dims[agent];
        let mut out = Vec::with_capacity(b * (w + dz));
        for r in 0..b {
            out.extend_from_slice(&source[r * g + off..r * g + off + w]);
            out.extend_from_slice(&signals[r * dz..(r + 1) * dz]);
        }
        out
    };
    let critic_input = |o: &[f64], a: &[f64]| -> Vec<f64> {
        let aw = n_team * n_act;
        let mut out = Vec::with_capacity(b * (g + aw + cdz));
        for r in 0..b {
            out.extend_from_slice(&o[r * g..(r + 1) * g]);
            out.extend_from_slice(&a[r * aw..(r + 1) * aw]);
            out.extend_from_slice(&signals[r * dz..r * dz + cdz]);
        }
        out
    };

    // Greedy target actions.
    let mut target_actions = vec![0.0; b * n_team * n_act];
    for (k, agent) in spec.agents.clone().enumerate() {
        let (logits, _) = team.target_actors[k].forward_batch(&agent_input(&next_obs, agent), b)?;
        for r in 0..b {
            let a = argmax(&logits[r * n_act..(r + 1) * n_act]);
            target_actions[(r * n_team + k) * n_act + a] = 1.0;
        }
    }
    let next_critic_in = critic_input(&next_obs, &target_actions);
    let critic_in = critic_input(&obs, &actions);
    let critic_width = g + n_team * n_act + cdz;

    let mut stats = UpdateStats::default();
    for k in 0..n_team {
        let (q_next, _) = team.target_critics[k].forward_batch(&next_critic_in, b)?;
        let y: Vec<f64> = batch
            .iter()
            .zip(&q_next)
            .map(|(t, q)| {
                let cont = if t.done { 0.0 } else { 1.0 };
                t.rewards[k] + cfg.gamma * cont * q
            })
            .collect();
        let critic = &mut team.critics[k];
        let mut tape = Tape::new();
        let bound = critic.net.bind(&mut tape);
        let x = tape.leaf(critic_in.clone(), b, critic_width)?;
        let q = critic.net.forward_tape(&mut tape, &bound, x)?.output;
        let target = tape.leaf(y, b, 1)?;
        let loss = tape.mse(q, target)?;
        stats.critic_loss += tape.scalar(loss) / n_team as f64;
        let grads = tape.backward(loss)?;
        critic.net.accumulate_grads(&bound, &grads);
        critic.step(cfg.lr_critic, cfg.clip())?;
    }

    // Actor step: each agent's relaxed action replaces its buffered action
    // in its own critic's input.
    let mut tape = Tape::new();
    let obs_var = tape.leaf(obs.clone(), b, g)?;
    let signal_var = if cdz > 0 {
        Some(tape.leaf(signals.clone(), b, dz)?)
    } else {
        None
    };
    let mut actor_bounds = Vec::with_capacity(n_team);
    let mut hiddens = Vec::with_capacity(n_team);
    let mut objective = None;
    for (k, agent) in spec.agents.clone().enumerate() {
        let actor = &team.actors[k];
        let bound = actor.model.net.bind(&mut tape);
        let input = tape.leaf(agent_input(&obs, agent), b, actor.obs_dim + dz)?;
        let nodes = actor.model.net.forward_tape(&mut tape, &bound, input)?;
        let noise = gumbel_noise(b * n_act, rng);
        let relaxed = gumbel_softmax_tape(&mut tape, nodes.pre_output, &noise, cfg.gumbel_temperature)?;

        let mut parts = vec![obs_var];
        for j in 0..n_team {
            if j == k {
                parts.push(relaxed);
            } else {
                let mut cols = Vec::with_capacity(b * n_act);
                for r in 0..b {
                    let base = (r * n_team + j) * n_act;
                    cols.extend_from_slice(&actions[base..base + n_act]);
                }
                parts.push(tape.leaf(cols, b, n_act)?);
            }
        }
        parts.extend(signal_var);
        let x = tape.concat(&parts)?;
        let critic = &team.critics[k].net;
        let cbound = critic.bind(&mut tape);
        let q = critic.forward_tape(&mut tape, &cbound, x)?.output;
        let mean_q = tape.mean(q);
        let sq = tape.square(nodes.pre_output);
        let penalty = tape.mean(sq);
        let penalty = tape.scale(penalty, LOGIT_PENALTY);
        let neg_q = tape.scale(mean_q, -1.0);
        let loss = tape.add(neg_q, penalty)?;
        objective = Some(match objective {
            None => loss,
            Some(acc) => tape.add(acc, loss)?,
        });
        actor_bounds.push(bound);
        hiddens.push(nodes.hidden);
    }
    let actor_loss = objective.expect("team has at least one agent");
    stats.policy_loss = tape.scalar(actor_loss);
    let coupling_nodes = match &team.coupling {
        Some(c) => {
            let mut state = Vec::with_capacity(b * spec.team_obs_dim());
            let lo = spec.obs_offset(spec.agents.start);
            let hi = spec.obs_offset(spec.agents.end);
            for r in 0..b {
                state.extend_from_slice(&obs[r * g + lo..r * g + hi]);
            }
            let state = tape.leaf(state, b, spec.team_obs_dim())?;
            let z = tape.leaf(signals.clone(), b, dz)?;
            let nodes = c.record(&mut tape, state, &hiddens, z)?;
            Some((c.weighted(&mut tape, actor_loss, &nodes)?, nodes))
        }
        None => None,
    };
    let total = coupling_nodes.as_ref().map_or(actor_loss, |(t, _)| *t);
    let grads = tape.backward(total)?;
    for (actor, bound) in team.actors.iter_mut().zip(&actor_bounds) {
        actor.model.net.accumulate_grads(bound, &grads);
        actor.model.step(cfg.lr_actor, cfg.clip())?;
    }
    if let (Some(c), Some((_, nodes))) = (team.coupling.as_mut(), coupling_nodes.as_ref()) {
        stats.mi_loss = tape.scalar(nodes.loss);
        c.step(&tape, nodes, cfg.lr_unet, cfg.clip())?;
    }

    let tau = cfg.target_update_rate;
    for k in 0..n_team {
        team.target_actors[k].soft_update_from(&team.actors[k].model.net, tau);
        team.target_critics[k].soft_update_from(&team.critics[k].net, tau);
    }
    Ok(stats)
}

impl TeamLearner for MaddpgTeam {
    fn algorithm(&self) -> Algorithm {
        self.algorithm
    }

    fn spec(&self) -> &TeamSpec {
        &self.spec
    }

    fn signal_dim(&self) -> usize {
        self.config.signal_dim
    }

    fn policies(&self) -> &[PolicyNetwork] {
        &self.actors
    }

    fn coupling(&self) -> Option<&SignalCoupling> {
        self.coupling.as_ref()
    }

    fn act(
        &self,
        obs: &[Vec<f64>],
        signal: &Signal,
        rng: &mut StreamRng,
        mode: ActMode,
    ) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
        let eps = match mode {
            ActMode::Explore { progress } => self.epsilon(progress),
            _ => 0.0,
        };
        act_with_policies(&self.actors, &self.spec.agents, obs, signal, rng, mode, eps)
    }

    fn observe_step(&mut self, step: &StepView<'_>, streams: &mut TeamStreams) -> Result<Option<UpdateStats>> {
        let agents = self.spec.agents.clone();
        self.buffer.push(Transition {
            obs: step.obs.concat(),
            signal: step.signal.to_vec(),
            actions: step.actions[agents.clone()].to_vec(),
            rewards: step.rewards[agents].to_vec(),
            next_obs: step.next_obs.concat(),
            done: step.done,
        });
        self.steps += 1;
        let ready = self.buffer.len() >= self.config.warmup.max(self.config.batch_size);
        if ready && self.steps % self.config.update_every as u64 == 0 {
            return maddpg_update(self, &mut streams.buffer).map(Some);
        }
        Ok(None)
    }

    fn networks(&self) -> Vec<NetRef<'_>> {
        let team = self.spec.team;
        let mut out = policy_refs(team, &self.actors);
        for (k, c) in self.critics.iter().enumerate() {
            out.push(NetRef {
                name: format!("team{team}/critic{k}"),
                net: &c.net,
                adam: Some(&c.adam),
            });
        }
        for (k, n) in self.target_actors.iter().enumerate() {
            out.push(NetRef {
                name: format!("team{team}/target_policy{k}"),
                net: n,
                adam: None,
            });
        }
        for (k, n) in self.target_critics.iter().enumerate() {
            out.push(NetRef {
                name: format!("team{team}/target_critic{k}"),
                net: n,
                adam: None,
            });
        }
        out.extend(self.coupling.as_ref().map(|c| coupling_ref(team, c)));
        out
    }

    fn networks_mut(&mut self) -> Vec<NetMut<'_>> {
        let team = self.spec.team;
        let mut out = policy_muts(team, &mut self.actors);
        for (k, c) in self.critics.iter_mut().enumerate() {
            out.push(NetMut {
                name: format!("team{team}/critic{k}"),
                net: &mut c.net,
                adam: Some(&mut c.adam),
            });
        }
        for (k, n) in self.target_actors.iter_mut().enumerate() {
            out.push(NetMut {
                name: format!("team{team}/target_policy{k}"),
                net: n,
                adam: None,
            });
        }
        for (k, n) in self.target_critics.iter_mut().enumerate() {
            out.push(NetMut {
                name: format!("team{team}/target_critic{k}"),
                net: n,
                adam: None,
            });
        }
        out.extend(self.coupling.as_mut().map(|c| coupling_mut(team, c)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::rng::stream;

    fn spec() -> TeamSpec {
        TeamSpec {
            team: 0,
            agents: 0..2,
            obs_dims: vec![2, 2, 3],
            n_actions: 3,
        }
    }

    fn config(algorithm: Algorithm) -> TrainConfig {
        let mut c = TrainConfig::predator_prey_defaults(algorithm, 2);
        c.batch_size = 16;
        c.warmup = 16;
        c.update_every = 1;
        c.policy_hidden = vec![8];
        c.critic_hidden = vec![16];
        c.unet_hidden = vec![8];
        c
    }

    fn transition(i: usize, dz: usize) -> Transition {
        let x = i as f64 * 0.1;
        Transition {
            obs: vec![x, -x, 0.5, x * x, 1.0, 0.0, -1.0],
            signal: vec![0.3; dz],
            actions: vec![i % 3, (i / 3) % 3],
            rewards: vec![(i % 3) as f64, 1.0],
            next_obs: vec![0.0; 7],
            done: true,
        }
    }

    #[test]
    fn empty_buffer_is_not_ready() {
        let mut team = MaddpgTeam::new(Algorithm::Maddpg, spec(), config(Algorithm::Maddpg), 1).unwrap();
        assert!(matches!(team.update(&mut stream(0, "b")), Err(Error::NotReady { .. })));
    }

    #[test]
    fn full_target_rate_copies_online() {
        let mut c = config(Algorithm::Maddpg);
        c.target_update_rate = 1.0;
        let mut team = MaddpgTeam::new(Algorithm::Maddpg, spec(), c, 1).unwrap();
        for i in 0..32 {
            team.push_transition(transition(i, 0));
        }
        team.update(&mut stream(0, "b")).unwrap();
        for k in 0..2 {
            assert_eq!(team.target_critics[k], team.critics[k].net);
            assert_eq!(team.target_actors[k], team.actors[k].model.net);
        }
    }

    #[test]
    fn critic_fits_immediate_reward_without_discount() {
        let mut c = config(Algorithm::Maddpg);
        c.gamma = 0.0;
        c.lr_critic = 3e-3;
        c.clip_norm = 0.0;
        c.batch_size = 9;
        let mut team = MaddpgTeam::new(Algorithm::Maddpg, spec(), c, 2).unwrap();
        for i in 0..9 {
            team.push_transition(transition(i, 0));
        }
        let mut rng = stream(0, "b");
        for _ in 0..3000 {
            team.update(&mut rng).unwrap();
        }
        let stats = team.update(&mut rng).unwrap();
        assert!(stats.critic_loss <= 1e-3, "critic mse {}", stats.critic_loss);
    }

    #[test]
    fn zero_alpha_coupling_leaves_actors_on_base_path() {
        // Identical teams, one with its coupling module removed.
        let mut c = config(Algorithm::SicMa);
        c.alpha = 0.0;
        let mut with = MaddpgTeam::new(Algorithm::SicMa, spec(), c.clone(), 5).unwrap();
        let mut without = MaddpgTeam::new(Algorithm::SicMa, spec(), c, 5).unwrap();
        without.coupling = None;
        for i in 0..32 {
            with.push_transition(transition(i, 20));
            without.push_transition(transition(i, 20));
        }
        let (mut r1, mut r2) = (stream(0, "b"), stream(0, "b"));
        for _ in 0..3 {
            with.update(&mut r1).unwrap();
            without.update(&mut r2).unwrap();
        }
        for k in 0..2 {
            assert_eq!(with.actors[k].model.net, without.actors[k].model.net);
        }
    }
}
