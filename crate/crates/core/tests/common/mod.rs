#![allow(dead_code)]

use std::fs;
use std::path::Path;

use rand::Rng;
use sic::algo::Algorithm;
use sic::autodiff::{Activation, Mlp, MlpSpec, OutputActivation, Tape, Tensor};
use sic::config::{ExperimentConfig, Scenario};
use sic::experiment::run_experiment;
use sic::rng::stream;
use sic::signal::{mi_loss_tape, unet_reconstruct, UNet};

// Fresh networks have zero biases, which can park ReLU inputs exactly on
// the kink; random offsets move every case to a differentiable point.
pub fn jitter(net: Mlp, rng: &mut impl Rng) -> Mlp {
    let mut params = net.params().to_vec();
    for t in &mut params {
        t.values.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    Mlp::from_params(net.spec().clone(), params).unwrap()
}

pub struct Case {
    pub policy: Mlp,
    pub unet: UNet,
    pub inputs: Vec<f64>,
    pub state: Vec<f64>,
    pub signals: Vec<f64>,
    pub actions: Vec<usize>,
    pub returns: Vec<f64>,
    pub rows: usize,
    pub alpha: f64,
}

impl Case {
    pub fn random(seed: u64) -> Self {
        let mut rng = stream(seed, "fd-case");
        let rows = rng.random_range(1..5);
        let d_in = rng.random_range(1..6);
        let depth = rng.random_range(1..3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..7)).collect();
        let n_actions = rng.random_range(2..5);
        let activation = if rng.random_bool(0.5) { Activation::Relu } else { Activation::Tanh };
        let spec = MlpSpec::new(d_in, &hidden, n_actions, activation, OutputActivation::Softmax);
        let policy = jitter(Mlp::new(spec, &mut rng).unwrap(), &mut rng);
        let state_dim = rng.random_range(1..4);
        let dz = rng.random_range(1..4);
        let unet_layers = [rng.random_range(2..6)];
        let unet = UNet::new(state_dim, &[*hidden.last().unwrap()], &unet_layers, dz, &mut rng).unwrap();
        let unet = UNet::from_net(jitter(unet.net, &mut rng), state_dim, &unet.hidden_dims).unwrap();
        let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let inputs = normal(rows * d_in);
        let state = normal(rows * state_dim);
        let signals = normal(rows * dz);
        let returns = normal(rows);
        let actions = (0..rows).map(|i| (seed as usize + i) % n_actions).collect();
        Self {
            policy,
            unet,
            inputs,
            state,
            signals,
            actions,
            returns,
            rows,
            alpha: 0.5,
        }
    }

    /// Policy-gradient surrogate plus `α·L_I`, with the hidden vector of the
    /// policy feeding the reconstruction network. Returns the loss and the
    /// gradients of both networks when `grads` is set.
    pub fn loss(&self, policy: &Mlp, unet: &UNet, alpha: f64, grads: bool) -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut tape = Tape::new();
        let pb = policy.bind(&mut tape);
        let x = tape.leaf(self.inputs.clone(), self.rows, self.inputs.len() / self.rows).unwrap();
        let nodes = policy.forward_tape(&mut tape, &pb, x).unwrap();
        let logp = tape.log_softmax(nodes.pre_output);
        let taken = tape.gather(logp, &self.actions).unwrap();
        let g = tape.leaf(self.returns.clone(), self.rows, 1).unwrap();
        let weighted = tape.mul(taken, g).unwrap();
        let mean = tape.mean(weighted);
        let pg = tape.scale(mean, -1.0);
        let ub = unet.net.bind(&mut tape);
        let s = tape.leaf(self.state.clone(), self.rows, self.state.len() / self.rows).unwrap();
        let z = tape.leaf(self.signals.clone(), self.rows, self.signals.len() / self.rows).unwrap();
        let recon = unet_reconstruct(&mut tape, unet, &ub, s, &[nodes.hidden]).unwrap();
        let li = mi_loss_tape(&mut tape, z, recon).unwrap();
        let scaled = tape.scale(li, alpha);
        let total = tape.add(pg, scaled).unwrap();
        let value = tape.scalar(total);
        if !grads {
            return (value, vec![], vec![]);
        }
        let gr = tape.backward(total).unwrap();
        let pgrads = pb.vars().iter().map(|&v| gr.get_or_zero(v)).collect();
        let ugrads = ub.vars().iter().map(|&v| gr.get_or_zero(v)).collect();
        (value, pgrads, ugrads)
    }
}

pub fn perturbed(net: &Mlp, tensor: usize, index: usize, delta: f64) -> Mlp {
    let mut params: Vec<Tensor> = net.params().to_vec();
    params[tensor].values[index] += delta;
    Mlp::from_params(net.spec().clone(), params).unwrap()
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = numeric.iter().map(|n| n * n).sum::<f64>().sqrt();
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}


/// Relative error between analytic gradients and central differences with
/// step `h`, over every parameter of both networks of a case.
pub fn finite_difference_error(case: &Case, h: f64) -> f64 {
    let (_, pa, ua) = case.loss(&case.policy, &case.unet, case.alpha, true);
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (t, tensor) in case.policy.params().iter().enumerate() {
        for i in 0..tensor.len() {
            let up = case.loss(&perturbed(&case.policy, t, i, h), &case.unet, case.alpha, false).0;
            let down = case.loss(&perturbed(&case.policy, t, i, -h), &case.unet, case.alpha, false).0;
            numeric.push((up - down) / (2.0 * h));
            analytic.push(pa[t][i]);
        }
    }
    for (t, tensor) in case.unet.net.params().iter().enumerate() {
        for i in 0..tensor.len() {
            let shift = |d: f64| {
                UNet::from_net(perturbed(&case.unet.net, t, i, d), case.unet.state_dim, &case.unet.hidden_dims).unwrap()
            };
            let up = case.loss(&case.policy, &shift(h), case.alpha, false).0;
            let down = case.loss(&case.policy, &shift(-h), case.alpha, false).0;
            numeric.push((up - down) / (2.0 * h));
            analytic.push(ua[t][i]);
        }
    }
    relative_error(&analytic, &numeric)
}

pub fn short(scenario: Scenario, algorithm: Algorithm, episodes: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::defaults(scenario, algorithm);
    c.seed = 17;
    c.episodes = episodes;
    c.metrics_every = (episodes / 10).max(1);
    c
}

pub fn metrics_bytes(config: &ExperimentConfig, dir: &Path) -> Vec<u8> {
    run_experiment(config, dir, None).unwrap();
    fs::read(dir.join("metrics.csv")).unwrap()
}

/// `metrics.csv` of the base algorithm and of the SIC variant with α = 0
/// and no signal, trained with otherwise identical settings.
pub fn reduced(sic: Algorithm, scenario: Scenario, episodes: usize) -> (Vec<u8>, Vec<u8>) {
    let tmp = tempfile::tempdir().unwrap();
    let mut base = short(scenario, sic.base(), episodes);
    let mut signal_free = short(scenario, sic, episodes);
    for t in signal_free.teams_mut() {
        t.train.alpha = 0.0;
        t.train.signal_dim = 0;
    }
    let [a, b] = signal_free.teams();
    let (ta, tb) = (a.train.clone(), b.train.clone());
    let [x, y] = base.teams_mut();
    x.train = ta;
    y.train = tb;
    (
        metrics_bytes(&base, &tmp.path().join("base")),
        metrics_bytes(&signal_free, &tmp.path().join("sic")),
    )
}
