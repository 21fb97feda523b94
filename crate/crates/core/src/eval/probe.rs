//! Probes of a trained team's signal-conditioned behaviour.

use crate::algo::{argmax, sample_categorical, PolicyNetwork, SignalCoupling};
use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::signal::{sample_signal, Signal};

use super::theory::JointDistribution;

/// Sampled signals and the joint actions they produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionProbe {
    pub samples: Vec<(Vec<f64>, usize)>,
    pub frequencies: Vec<f64>,
}

fn n_joint(policies: &[PolicyNetwork]) -> usize {
    policies.iter().map(PolicyNetwork::n_actions).product()
}

/// Joint index with the first teammate as the most significant digit, so
/// two binary agents give `2·a₀ + a₁`.
pub fn joint_index(policies: &[PolicyNetwork], actions: &[usize]) -> usize {
    policies
        .iter()
        .zip(actions)
        .fold(0, |acc, (p, &a)| acc * p.n_actions() + a)
}

fn signal_dim(policies: &[PolicyNetwork]) -> usize {
    policies.first().map_or(0, |p| p.signal_dim)
}

/// Team joint-action distribution for one signal, assuming teammates act
/// independently given it.
pub fn conditional_joint(policies: &[PolicyNetwork], observations: &[Vec<f64>], signal: &[f64]) -> Result<Vec<f64>> {
    let mut joint = vec![1.0];
    for (p, o) in policies.iter().zip(observations) {
        let (probs, _) = p.distribution(o, signal)?;
        let mut next = Vec::with_capacity(joint.len() * probs.len());
        for &j in &joint {
            for &q in &probs {
                next.push(j * q);
            }
        }
        joint = next;
    }
    Ok(joint)
}

/// Draws `n_signals` signals; for each, every agent takes its argmax
/// action (or samples when `greedy` is false) and the joint action is
/// recorded.
pub fn probe_signal_partition(
    policies: &[PolicyNetwork],
    observations: &[Vec<f64>],
    n_signals: usize,
    rng: &mut StreamRng,
    greedy: bool,
) -> Result<PartitionProbe> {
    let dz = signal_dim(policies);
    if dz == 0 {
        return Err(Error::Config("partition probe needs a team trained with a signal".into()));
    }
    if n_signals == 0 {
        return Err(Error::Parameter("need at least one signal".into()));
    }
    let mut counts = vec![0usize; n_joint(policies)];
    let mut samples = Vec::with_capacity(n_signals);
    for _ in 0..n_signals {
        let z = sample_signal(dz, rng).values;
        let mut actions = Vec::with_capacity(policies.len());
        for (p, o) in policies.iter().zip(observations) {
            let (probs, _) = p.distribution(o, &z)?;
            actions.push(if greedy { argmax(&probs) } else { sample_categorical(&probs, rng) });
        }
        let j = joint_index(policies, &actions);
        counts[j] += 1;
        samples.push((z, j));
    }
    let frequencies = counts.iter().map(|&c| c as f64 / n_signals as f64).collect();
    Ok(PartitionProbe { samples, frequencies })
}

/// Monte-Carlo estimate of the team's joint-action distribution for fixed
/// observations, marginalized over the signal: the exact conditional joint
/// distribution averaged over `n_samples` drawn signals.
pub fn joint_policy_frequencies(
    policies: &[PolicyNetwork],
    observations: &[Vec<f64>],
    n_samples: usize,
    rng: &mut StreamRng,
) -> Result<JointDistribution> {
    let dz = signal_dim(policies);
    let n = if dz == 0 { 1 } else { n_samples.max(1) };
    let mut acc = vec![0.0; n_joint(policies)];
    for _ in 0..n {
        let z = sample_signal(dz, rng).values;
        for (a, p) in acc.iter_mut().zip(conditional_joint(policies, observations, &z)?) {
            *a += p;
        }
    }
    let total: f64 = acc.iter().sum();
    JointDistribution::with_count(acc.iter().map(|a| a / total).collect(), n)
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Plug-in estimate of `I(z; joint action)` in nats: entropy of the
/// marginal joint distribution minus the mean entropy of the conditional
/// ones, over `n_samples` drawn signals.
pub fn mutual_information(
    policies: &[PolicyNetwork],
    observations: &[Vec<f64>],
    n_samples: usize,
    rng: &mut StreamRng,
) -> Result<f64> {
    let dz = signal_dim(policies);
    if dz == 0 {
        return Ok(0.0);
    }
    let n = n_samples.max(1);
    let mut marginal = vec![0.0; n_joint(policies)];
    let mut cond_entropy = 0.0;
    for _ in 0..n {
        let z = sample_signal(dz, rng).values;
        let joint = conditional_joint(policies, observations, &z)?;
        cond_entropy += entropy(&joint);
        for (m, p) in marginal.iter_mut().zip(&joint) {
            *m += p;
        }
    }
    marginal.iter_mut().for_each(|m| *m /= n as f64);
    Ok((entropy(&marginal) - cond_entropy / n as f64).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionScore {
    /// Mean squared reconstruction error per signal component.
    pub mse: f64,
    /// Mean squared error of always predicting 0, the signal mean.
    pub baseline: f64,
}

/// Held-out reconstruction error of the coupling network on fresh signals.
pub fn reconstruction_error(
    policies: &[PolicyNetwork],
    coupling: &SignalCoupling,
    observations: &[Vec<f64>],
    n_samples: usize,
    rng: &mut StreamRng,
) -> Result<ReconstructionScore> {
    let dz = coupling.unet.signal_dim();
    let state: Vec<f64> = observations.concat();
    let mut mse = 0.0;
    let mut baseline = 0.0;
    for _ in 0..n_samples.max(1) {
        let Signal { values: z } = sample_signal(dz, rng);
        let hiddens = policies
            .iter()
            .zip(observations)
            .map(|(p, o)| p.distribution(o, &z).map(|(_, h)| h))
            .collect::<Result<Vec<_>>>()?;
        let recon = coupling.unet.reconstruct(&state, &hiddens)?;
        mse += z.iter().zip(&recon).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / dz as f64;
        baseline += z.iter().map(|a| a * a).sum::<f64>() / dz as f64;
    }
    let n = n_samples.max(1) as f64;
    Ok(ReconstructionScore {
        mse: mse / n,
        baseline: baseline / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algo::PolicyMode;
    use crate::rng::stream;

    fn constant_policy(agent: usize, favour: usize) -> PolicyNetwork {
        let mut p = PolicyNetwork::new(agent, PolicyMode::StochasticSoftmax, 1, 2, &[4], 2, &mut stream(0, "p")).unwrap();
        for t in p.model.net.params_mut() {
            t.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let last = p.model.net.params_mut().last_mut().unwrap();
        last.values[favour] = 5.0;
        p
    }

    #[test]
    fn constant_policies_give_one_joint_action() {
        let team = [constant_policy(0, 1), constant_policy(1, 0)];
        let obs = vec![vec![1.0]; 2];
        let probe = probe_signal_partition(&team, &obs, 500, &mut stream(1, "z"), true).unwrap();
        assert_eq!(probe.frequencies, vec![0.0, 0.0, 1.0, 0.0]);
        let mi = mutual_information(&team, &obs, 200, &mut stream(1, "z")).unwrap();
        assert!(mi.abs() < 1e-12);
    }

    #[test]
    fn uniform_agents_give_uniform_joint() {
        let mut team = [constant_policy(0, 0), constant_policy(1, 0)];
        for p in &mut team {
            p.model.net.params_mut().last_mut().unwrap().values[0] = 0.0;
        }
        let d = joint_policy_frequencies(&team, &[vec![1.0], vec![1.0]], 100, &mut stream(2, "z")).unwrap();
        for p in d.probs {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn probe_without_signal_is_config_error() {
        let p = PolicyNetwork::new(0, PolicyMode::StochasticSoftmax, 1, 0, &[4], 2, &mut stream(0, "p")).unwrap();
        let err = probe_signal_partition(&[p], &[vec![1.0]], 10, &mut stream(0, "z"), true);
        assert!(matches!(err, Err(Error::Config(_))));
    }
}
