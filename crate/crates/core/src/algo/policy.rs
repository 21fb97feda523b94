use rand::Rng;

use crate::autodiff::{Activation, Mlp, MlpSpec, OutputActivation, Trainable};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyMode {
    /// Softmax head, actions are sampled.
    StochasticSoftmax,
    /// Logit head relaxed with Gumbel-softmax during training, argmax when
    /// acting.
    DeterministicGumbel,
}

/// Decentralized policy of one agent. Input is `observation ++ signal`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNetwork {
    pub agent_id: usize,
    pub mode: PolicyMode,
    pub obs_dim: usize,
    pub signal_dim: usize,
    pub model: Trainable,
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

impl PolicyNetwork {
    pub fn new<R: Rng + ?Sized>(
        agent_id: usize,
        mode: PolicyMode,
        obs_dim: usize,
        signal_dim: usize,
        hidden: &[usize],
        n_actions: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let head = match mode {
            PolicyMode::StochasticSoftmax => OutputActivation::Softmax,
            PolicyMode::DeterministicGumbel => OutputActivation::Identity,
        };
        let spec = MlpSpec::new(obs_dim + signal_dim, hidden, n_actions, Activation::Relu, head);
        Ok(Self {
            agent_id,
            mode,
            obs_dim,
            signal_dim,
            model: Trainable::new(Mlp::new(spec, rng)?),
        })
    }

    pub fn n_actions(&self) -> usize {
        self.model.net.spec().output_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.model.net.spec().hidden_dim()
    }

    pub fn input(&self, obs: &[f64], signal: &[f64]) -> Result<Vec<f64>> {
        if obs.len() != self.obs_dim || signal.len() != self.signal_dim {
            return Err(Error::Config(format!(
                "agent {} policy expects observation {} + signal {}, got {} + {}",
                self.agent_id,
                self.obs_dim,
                self.signal_dim,
                obs.len(),
                signal.len()
            )));
        }
        let mut x = Vec::with_capacity(obs.len() + signal.len());
        x.extend_from_slice(obs);
        x.extend_from_slice(signal);
        Ok(x)
    }

    /// Action probabilities (softmax of the logits in deterministic mode)
    /// and the last hidden vector.
    pub fn distribution(&self, obs: &[f64], signal: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (out, hidden) = self.model.net.forward(&self.input(obs, signal)?)?;
        let probs = match self.mode {
            PolicyMode::StochasticSoftmax => out,
            PolicyMode::DeterministicGumbel => softmax(&out),
        };
        Ok((probs, hidden))
    }

    pub fn greedy(&self, obs: &[f64], signal: &[f64]) -> Result<usize> {
        Ok(argmax(&self.distribution(obs, signal)?.0))
    }
}
