//! REINFORCE with independent, unshared policies (IND-RE) and its signal
//! coupled variant (SIC-RE).

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::rng::TeamStreams;

use super::{
    build_coupling, coupling_mut, coupling_ref, discounted_returns, policy_muts, policy_refs,
    Algorithm, NetMut, NetRef, PolicyMode, PolicyNetwork, SignalCoupling, TeamLearner, TeamSpec,
    TrainConfig, Trajectory, UpdateStats,
};

/// Rows of a team batch laid out for a recorded forward pass.
pub(crate) struct TeamRows {
    pub rows: usize,
    /// Per teammate: `rows × (obs_dim + D_z)` policy inputs.
    pub inputs: Vec<Vec<f64>>,
    /// `rows × team_obs_dim`, the reconstruction network's state input.
    pub state: Vec<f64>,
    /// `rows × D_z`.
    pub signals: Vec<f64>,
    /// Per teammate: taken action of each row.
    pub actions: Vec<Vec<usize>>,
}

impl TeamRows {
    pub fn new(n_team: usize) -> Self {
        Self {
            rows: 0,
            inputs: vec![Vec::new(); n_team],
            state: Vec::new(),
            signals: Vec::new(),
            actions: vec![Vec::new(); n_team],
        }
    }

    /// Appends one row from every agent's observation.
    pub fn push(&mut self, spec: &TeamSpec, obs: &[Vec<f64>], signal: &[f64], actions: &[usize]) {
        for (k, agent) in spec.agents.clone().enumerate() {
            self.inputs[k].extend_from_slice(&obs[agent]);
            self.inputs[k].extend_from_slice(signal);
            self.state.extend_from_slice(&obs[agent]);
            self.actions[k].push(actions[agent]);
        }
        self.signals.extend_from_slice(signal);
        self.rows += 1;
    }
}

/// One policy-gradient step on a batch of episodes. Each agent ascends
/// `Σ_t G_t log π(a_t | o_t, z)` averaged over episodes; with a coupling
/// module the objective also carries `−α·L_I` and the reconstruction network
/// takes its own step on `L_I`.
pub fn reinforce_update(
    policies: &mut [PolicyNetwork],
    coupling: Option<&mut SignalCoupling>,
    spec: &TeamSpec,
    batch: &[Trajectory],
    config: &TrainConfig,
) -> Result<UpdateStats> {
    if let Some(p) = policies.iter().find(|p| p.mode != PolicyMode::StochasticSoftmax) {
        return Err(Error::Mode(format!(
            "REINFORCE needs stochastic policies, agent {} is deterministic",
            p.agent_id
        )));
    }
    if batch.is_empty() {
        return Ok(UpdateStats::default());
    }
    let team = spec.team;
    let mut rows = TeamRows::new(spec.n_team());
    let mut returns: Vec<Vec<f64>> = vec![Vec::new(); spec.n_team()];
    for traj in batch {
        let signal = &traj.signals[team].values;
        for step in &traj.steps {
            rows.push(spec, &step.observations, signal, &step.actions);
        }
        for (k, agent) in spec.agents.clone().enumerate() {
            returns[k].extend(discounted_returns(&traj.agent_rewards(agent), config.gamma));
        }
    }

    let mut tape = Tape::new();
    let mut bounds = Vec::with_capacity(policies.len());
    let mut hiddens = Vec::with_capacity(policies.len());
    let mut objective = None;
    for (k, policy) in policies.iter().enumerate() {
        let bound = policy.model.net.bind(&mut tape);
        let width = policy.obs_dim + policy.signal_dim;
        let input = tape.leaf(rows.inputs[k].clone(), rows.rows, width)?;
        let nodes = policy.model.net.forward_tape(&mut tape, &bound, input)?;
        let logp = tape.log_softmax(nodes.pre_output);
        let taken = tape.gather(logp, &rows.actions[k])?;
        let g = tape.leaf(returns[k].clone(), rows.rows, 1)?;
        let weighted = tape.mul(taken, g)?;
        let total = tape.sum(weighted);
        let loss = tape.scale(total, -1.0 / batch.len() as f64);
        objective = Some(match objective {
            None => loss,
            Some(acc) => tape.add(acc, loss)?,
        });
        bounds.push(bound);
        hiddens.push(nodes.hidden);
    }
    let policy_loss_var = objective.expect("team has at least one agent");
    let policy_loss = tape.scalar(policy_loss_var);

    let mut stats = UpdateStats {
        policy_loss,
        ..UpdateStats::default()
    };
    match coupling {
        Some(c) => {
            let state = tape.leaf(rows.state.clone(), rows.rows, spec.team_obs_dim())?;
            let signals = tape.leaf(rows.signals.clone(), rows.rows, c.unet.signal_dim())?;
            let nodes = c.record(&mut tape, state, &hiddens, signals)?;
            let total = c.weighted(&mut tape, policy_loss_var, &nodes)?;
            let grads = tape.backward(total)?;
            step_policies(policies, &bounds, &grads, config)?;
            stats.mi_loss = tape.scalar(nodes.loss);
            c.step(&tape, &nodes, config.lr_unet, config.clip())?;
        }
        None => {
            let grads = tape.backward(policy_loss_var)?;
            step_policies(policies, &bounds, &grads, config)?;
        }
    }
    Ok(stats)
}

fn step_policies(
    policies: &mut [PolicyNetwork],
    bounds: &[crate::autodiff::BoundParams],
    grads: &crate::autodiff::Gradients,
    config: &TrainConfig,
) -> Result<()> {
    for (policy, bound) in policies.iter_mut().zip(bounds) {
        policy.model.net.accumulate_grads(bound, grads);
        policy.model.step(config.lr_actor, config.clip())?;
    }
    Ok(())
}

/// A team trained with REINFORCE, updating every `batch_size` episodes.
pub struct ReinforceTeam {
    algorithm: Algorithm,
    spec: TeamSpec,
    config: TrainConfig,
    policies: Vec<PolicyNetwork>,
    coupling: Option<SignalCoupling>,
    pending: Vec<Trajectory>,
}

impl ReinforceTeam {
    pub fn new(algorithm: Algorithm, spec: TeamSpec, config: TrainConfig, master_seed: u64) -> Result<Self> {
        let policies = spec
            .agents
            .clone()
            .enumerate()
            .map(|(k, agent)| {
                let mut rng = spec.init_rng(master_seed, &format!("policy{k}"));
                PolicyNetwork::new(
                    agent,
                    PolicyMode::StochasticSoftmax,
                    spec.obs_dims[agent],
                    config.signal_dim,
                    &config.policy_hidden,
                    spec.n_actions,
                    &mut rng,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let coupling = build_coupling(&spec, &config, &policies, master_seed)?;
        Ok(Self {
            algorithm,
            spec,
            config,
            policies,
            coupling,
            pending: Vec::new(),
        })
    }
}

impl TeamLearner for ReinforceTeam {
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
        &self.policies
    }

    fn coupling(&self) -> Option<&SignalCoupling> {
        self.coupling.as_ref()
    }

    fn end_episode(&mut self, traj: &Trajectory, _streams: &mut TeamStreams) -> Result<Option<UpdateStats>> {
        self.pending.push(traj.clone());
        if self.pending.len() < self.config.batch_size {
            return Ok(None);
        }
        let batch = std::mem::take(&mut self.pending);
        reinforce_update(
            &mut self.policies,
            self.coupling.as_mut(),
            &self.spec,
            &batch,
            &self.config,
        )
        .map(Some)
    }

    fn networks(&self) -> Vec<NetRef<'_>> {
        let mut out = policy_refs(self.spec.team, &self.policies);
        out.extend(self.coupling.as_ref().map(|c| coupling_ref(self.spec.team, c)));
        out
    }

    fn networks_mut(&mut self) -> Vec<NetMut<'_>> {
        let team = self.spec.team;
        let mut out = policy_muts(team, &mut self.policies);
        out.extend(self.coupling.as_mut().map(|c| coupling_mut(team, c)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::TrajectoryStep;
    use crate::signal::Signal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bandit_spec() -> TeamSpec {
        TeamSpec {
            team: 0,
            agents: 0..1,
            obs_dims: vec![1],
            n_actions: 2,
        }
    }

    fn episode(action: usize, reward: f64) -> Trajectory {
        Trajectory {
            signals: vec![Signal::empty()],
            steps: vec![TrajectoryStep {
                observations: vec![vec![1.0]],
                actions: vec![action],
                hiddens: vec![],
                rewards: vec![reward],
                done: true,
            }],
            ..Trajectory::default()
        }
    }

    fn config() -> TrainConfig {
        let mut c = TrainConfig::matrix_defaults(Algorithm::IndRe);
        c.lr_actor = 1e-2;
        c
    }

    #[test]
    fn zero_returns_leave_policy_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = vec![PolicyNetwork::new(0, PolicyMode::StochasticSoftmax, 1, 0, &[8], 2, &mut rng).unwrap()];
        let before = p[0].model.net.clone();
        reinforce_update(&mut p, None, &bandit_spec(), &[episode(1, 0.0)], &config()).unwrap();
        assert_eq!(p[0].model.net, before);
    }

    #[test]
    fn deterministic_policy_is_mode_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = vec![PolicyNetwork::new(0, PolicyMode::DeterministicGumbel, 1, 0, &[8], 2, &mut rng).unwrap()];
        let err = reinforce_update(&mut p, None, &bandit_spec(), &[episode(0, 1.0)], &config());
        assert!(matches!(err, Err(Error::Mode(_))));
    }

    #[test]
    fn bandit_converges_to_rewarded_arm() {
        let mut team = ReinforceTeam::new(Algorithm::IndRe, bandit_spec(), config(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut streams = crate::rng::RunStreams::new(0, 1).teams.remove(0);
        for _ in 0..10_000 {
            let (probs, _) = team.policies[0].distribution(&[1.0], &[]).unwrap();
            let a = crate::algo::sample_categorical(&probs, &mut rng);
            let r = if a == 0 { 1.0 } else { 0.0 };
            team.end_episode(&episode(a, r), &mut streams).unwrap();
        }
        let (probs, _) = team.policies[0].distribution(&[1.0], &[]).unwrap();
        assert!(probs[0] >= 0.99, "π(0) = {}", probs[0]);
    }
}
