//! COMA: stochastic actors with a centralized per-action critic and the
//! counterfactual baseline, plus the signal coupled variant SIC-COMA.

use crate::autodiff::{Activation, Mlp, MlpSpec, OutputActivation, Tape, Trainable};
use crate::error::{Error, Result};
use crate::rng::TeamStreams;

use super::reinforce::TeamRows;
use super::{
    build_coupling, coma_advantage, coupling_mut, coupling_ref, gae_compute, policy_muts,
    policy_refs, Algorithm, NetMut, NetRef, PolicyMode, PolicyNetwork, SignalCoupling,
    TeamLearner, TeamSpec, TrainConfig, Trajectory, UpdateStats,
};

pub struct ComaTeam {
    algorithm: Algorithm,
    spec: TeamSpec,
    config: TrainConfig,
    actors: Vec<PolicyNetwork>,
    critics: Vec<Trainable>,
    coupling: Option<SignalCoupling>,
    pending: Vec<Trajectory>,
    pending_steps: usize,
}

fn critic_input_dim(spec: &TeamSpec, config: &TrainConfig) -> usize {
    let signal = if config.critic_uses_signal { config.signal_dim } else { 0 };
    spec.global_obs_dim() + (spec.n_team() - 1) * spec.n_actions + signal
}

/// Critic input for teammate `k`: every observation, the one-hot actions of
/// the other teammates and the signal.
fn critic_row(spec: &TeamSpec, config: &TrainConfig, k: usize, obs: &[Vec<f64>], actions: &[usize], signal: &[f64], out: &mut Vec<f64>) {
    for o in obs {
        out.extend_from_slice(o);
    }
    for (j, agent) in spec.agents.clone().enumerate() {
        if j != k {
            let mut one_hot = vec![0.0; spec.n_actions];
            one_hot[actions[agent]] = 1.0;
            out.extend_from_slice(&one_hot);
        }
    }
    if config.critic_uses_signal {
        out.extend_from_slice(signal);
    }
}

impl ComaTeam {
    pub fn new(algorithm: Algorithm, spec: TeamSpec, config: TrainConfig, master_seed: u64) -> Result<Self> {
        let mut actors = Vec::with_capacity(spec.n_team());
        let mut critics = Vec::with_capacity(spec.n_team());
        for (k, agent) in spec.agents.clone().enumerate() {
            let mut rng = spec.init_rng(master_seed, &format!("policy{k}"));
            actors.push(PolicyNetwork::new(
                agent,
                PolicyMode::StochasticSoftmax,
                spec.obs_dims[agent],
                config.signal_dim,
                &config.policy_hidden,
                spec.n_actions,
                &mut rng,
            )?);
            let mut rng = spec.init_rng(master_seed, &format!("critic{k}"));
            let cspec = MlpSpec::new(
                critic_input_dim(&spec, &config),
                &config.critic_hidden,
                spec.n_actions,
                Activation::Relu,
                OutputActivation::Identity,
            );
            critics.push(Trainable::new(Mlp::new(cspec, &mut rng)?));
        }
        let coupling = build_coupling(&spec, &config, &actors, master_seed)?;
        Ok(Self {
            algorithm,
            spec,
            config,
            actors,
            critics,
            coupling,
            pending: Vec::new(),
            pending_steps: 0,
        })
    }

    pub fn critics(&self) -> &[Trainable] {
        &self.critics
    }
}

/// One update on a batch of episodes. Critics regress `Q(s, a_k)` toward
/// `A_GAE + V`, where `V = Σ_a π(a)Q(s, a)`; actors ascend the
/// counterfactual advantage times `log π`.
pub fn coma_update(
    actors: &mut [PolicyNetwork],
    critics: &mut [Trainable],
    coupling: Option<&mut SignalCoupling>,
    spec: &TeamSpec,
    batch: &[Trajectory],
    config: &TrainConfig,
) -> Result<UpdateStats> {
    if let Some(p) = actors.iter().find(|p| p.mode != PolicyMode::StochasticSoftmax) {
        return Err(Error::Mode(format!(
            "COMA needs stochastic policies, agent {} is deterministic",
            p.agent_id
        )));
    }
    if batch.is_empty() {
        return Ok(UpdateStats::default());
    }
    let n_team = spec.n_team();
    let n_act = spec.n_actions;
    let team = spec.team;
    let mut rows = TeamRows::new(n_team);
    let mut critic_inputs: Vec<Vec<f64>> = vec![Vec::new(); n_team];
    for traj in batch {
        let signal = &traj.signals[team].values;
        for step in &traj.steps {
            rows.push(spec, &step.observations, signal, &step.actions);
            for (k, input) in critic_inputs.iter_mut().enumerate() {
                critic_row(spec, config, k, &step.observations, &step.actions, signal, input);
            }
        }
    }
    let n = rows.rows;
    let cw = critic_inputs[0].len() / n;

    // Current Q values, policies and advantages.
    let mut q_targets: Vec<Vec<f64>> = Vec::with_capacity(n_team);
    let mut advantages: Vec<Vec<f64>> = Vec::with_capacity(n_team);
    for (k, agent) in spec.agents.clone().enumerate() {
        let (q, _) = critics[k].net.forward_batch(&critic_inputs[k], n)?;
        let (probs, _) = actors[k].model.net.forward_batch(&rows.inputs[k], n)?;
        let mut targets = Vec::with_capacity(n);
        let mut adv = Vec::with_capacity(n);
        let mut row = 0;
        for traj in batch {
            let len = traj.len();
            let mut values = Vec::with_capacity(len + 1);
            for t in 0..len {
                let r = row + t;
                let qr = &q[r * n_act..(r + 1) * n_act];
                let pr = &probs[r * n_act..(r + 1) * n_act];
                values.push(qr.iter().zip(pr).map(|(a, b)| a * b).sum::<f64>());
                adv.push(coma_advantage(qr, pr, rows.actions[k][r]));
            }
            values.push(0.0);
            let gae = gae_compute(&traj.agent_rewards(agent), &values, config.gamma, config.lambda);
            targets.extend(gae.iter().zip(&values).map(|(a, v)| a + v));
            row += len;
        }
        q_targets.push(targets);
        advantages.push(adv);
    }

    let mut stats = UpdateStats::default();
    for (k, critic) in critics.iter_mut().enumerate() {
        let mut tape = Tape::new();
        let bound = critic.net.bind(&mut tape);
        let x = tape.leaf(critic_inputs[k].clone(), n, cw)?;
        let q = critic.net.forward_tape(&mut tape, &bound, x)?.output;
        let taken = tape.gather(q, &rows.actions[k])?;
        let y = tape.leaf(q_targets[k].clone(), n, 1)?;
        let loss = tape.mse(taken, y)?;
        stats.critic_loss += tape.scalar(loss) / n_team as f64;
        let grads = tape.backward(loss)?;
        critic.net.accumulate_grads(&bound, &grads);
        critic.step(config.lr_critic, config.clip())?;
    }

    let mut tape = Tape::new();
    let mut bounds = Vec::with_capacity(n_team);
    let mut hiddens = Vec::with_capacity(n_team);
    let mut objective = None;
    for (k, actor) in actors.iter().enumerate() {
        let bound = actor.model.net.bind(&mut tape);
        let input = tape.leaf(rows.inputs[k].clone(), n, actor.obs_dim + actor.signal_dim)?;
        let nodes = actor.model.net.forward_tape(&mut tape, &bound, input)?;
        let logp = tape.log_softmax(nodes.pre_output);
        let taken = tape.gather(logp, &rows.actions[k])?;
        let a = tape.leaf(advantages[k].clone(), n, 1)?;
        let weighted = tape.mul(taken, a)?;
        let mean = tape.mean(weighted);
        let loss = tape.scale(mean, -1.0);
        objective = Some(match objective {
            None => loss,
            Some(acc) => tape.add(acc, loss)?,
        });
        bounds.push(bound);
        hiddens.push(nodes.hidden);
    }
    let actor_loss = objective.expect("team has at least one agent");
    stats.policy_loss = tape.scalar(actor_loss);
    match coupling {
        Some(c) => {
            let state = tape.leaf(rows.state.clone(), n, spec.team_obs_dim())?;
            let z = tape.leaf(rows.signals.clone(), n, c.unet.signal_dim())?;
            let nodes = c.record(&mut tape, state, &hiddens, z)?;
            let total = c.weighted(&mut tape, actor_loss, &nodes)?;
            let grads = tape.backward(total)?;
            for (actor, bound) in actors.iter_mut().zip(&bounds) {
                actor.model.net.accumulate_grads(bound, &grads);
                actor.model.step(config.lr_actor, config.clip())?;
            }
            stats.mi_loss = tape.scalar(nodes.loss);
            c.step(&tape, &nodes, config.lr_unet, config.clip())?;
        }
        None => {
            let grads = tape.backward(actor_loss)?;
            for (actor, bound) in actors.iter_mut().zip(&bounds) {
                actor.model.net.accumulate_grads(bound, &grads);
                actor.model.step(config.lr_actor, config.clip())?;
            }
        }
    }
    Ok(stats)
}

impl TeamLearner for ComaTeam {
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

    fn end_episode(&mut self, traj: &Trajectory, _streams: &mut TeamStreams) -> Result<Option<UpdateStats>> {
        self.pending_steps += traj.len();
        self.pending.push(traj.clone());
        if self.pending_steps < self.config.batch_size {
            return Ok(None);
        }
        let batch = std::mem::take(&mut self.pending);
        self.pending_steps = 0;
        coma_update(
            &mut self.actors,
            &mut self.critics,
            self.coupling.as_mut(),
            &self.spec,
            &batch,
            &self.config,
        )
        .map(Some)
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
        out.extend(self.coupling.as_mut().map(|c| coupling_mut(team, c)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::TrajectoryStep;
    use crate::signal::Signal;

    fn spec() -> TeamSpec {
        TeamSpec {
            team: 0,
            agents: 0..2,
            obs_dims: vec![1, 1],
            n_actions: 2,
        }
    }

    #[test]
    fn zero_advantage_leaves_actors_unchanged() {
        // Zero critic weights give equal Q for every action.
        let config = TrainConfig::matrix_defaults(Algorithm::Coma);
        let mut team = ComaTeam::new(Algorithm::Coma, spec(), config.clone(), 0).unwrap();
        for c in &mut team.critics {
            for p in c.net.params_mut() {
                p.values.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let before: Vec<_> = team.actors.iter().map(|a| a.model.net.clone()).collect();
        let traj = Trajectory {
            signals: vec![Signal::empty()],
            steps: vec![TrajectoryStep {
                observations: vec![vec![1.0], vec![1.0]],
                actions: vec![0, 1],
                hiddens: vec![],
                rewards: vec![1.0, 1.0],
                done: true,
            }],
            ..Trajectory::default()
        };
        coma_update(&mut team.actors, &mut team.critics, None, &team.spec, &[traj], &config).unwrap();
        for (a, b) in team.actors.iter().zip(&before) {
            assert_eq!(&a.model.net, b);
        }
    }
}
