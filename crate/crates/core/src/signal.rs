//! Coordination signal, the centralized reconstruction network and the
//! mutual-information loss.
//!
//! A team draws `z ~ N(0, I)` once per episode and every teammate sees it.
//! The reconstruction network maps the team state and the concatenated last
//! hidden vectors of the teammates' policies to `z′`. Modelling the
//! reconstruction density as a fixed-variance Gaussian turns the negative
//! log-likelihood into the mean squared error between `z′` and `z`, up to a
//! constant, so that is the loss used here.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Activation, Mlp, MlpSpec, OutputActivation, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub values: Vec<f64>,
}

impl Signal {
    pub fn empty() -> Self {
        Self { values: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// `dim` i.i.d. standard-normal components. `dim == 0` draws nothing.
pub fn sample_signal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Signal {
    Signal {
        values: (0..dim).map(|_| rng.sample(StandardNormal)).collect(),
    }
}

/// Centralized network reconstructing the team signal.
#[derive(Debug, Clone, PartialEq)]
pub struct UNet {
    pub net: Mlp,
    pub state_dim: usize,
    pub hidden_dims: Vec<usize>,
}

impl UNet {
    /// ReLU network `[state + Σ hidden] → layers… → signal_dim`.
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden_dims: &[usize],
        layers: &[usize],
        signal_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let input = state_dim + hidden_dims.iter().sum::<usize>();
        let spec = MlpSpec::new(input, layers, signal_dim, Activation::Relu, OutputActivation::Identity);
        Ok(Self {
            net: Mlp::new(spec, rng)?,
            state_dim,
            hidden_dims: hidden_dims.to_vec(),
        })
    }

    pub fn from_net(net: Mlp, state_dim: usize, hidden_dims: &[usize]) -> Result<Self> {
        let input = state_dim + hidden_dims.iter().sum::<usize>();
        if net.spec().input_dim() != input {
            return Err(Error::InputShape(format!(
                "reconstruction net takes {} inputs, layout needs {input}",
                net.spec().input_dim()
            )));
        }
        Ok(Self {
            net,
            state_dim,
            hidden_dims: hidden_dims.to_vec(),
        })
    }

    pub fn signal_dim(&self) -> usize {
        self.net.spec().output_dim()
    }

    fn check_layout(&self, state_len: usize, hidden_lens: &[usize]) -> Result<()> {
        if state_len != self.state_dim || hidden_lens != self.hidden_dims.as_slice() {
            return Err(Error::InputShape(format!(
                "reconstruction layout is state {} + hiddens {:?}, got {state_len} + {hidden_lens:?}",
                self.state_dim, self.hidden_dims
            )));
        }
        Ok(())
    }

    /// `z′ = f(state, h₁ … hₙ)` without recording a graph.
    pub fn reconstruct(&self, state: &[f64], hiddens: &[Vec<f64>]) -> Result<Vec<f64>> {
        let lens: Vec<usize> = hiddens.iter().map(Vec::len).collect();
        self.check_layout(state.len(), &lens)?;
        let mut input = state.to_vec();
        for h in hiddens {
            input.extend_from_slice(h);
        }
        Ok(self.net.forward(&input)?.0)
    }
}

/// Recorded reconstruction over a batch: `state` is `rows × state_dim`, each
/// hidden node `rows × hidden_dims[i]`. Gradients reach both the network
/// parameters (through `bound`) and whatever produced the hidden nodes.
pub fn unet_reconstruct(
    tape: &mut Tape,
    unet: &UNet,
    bound: &crate::autodiff::BoundParams,
    state: Var,
    hiddens: &[Var],
) -> Result<Var> {
    let lens: Vec<usize> = hiddens.iter().map(|&h| tape.shape(h).1).collect();
    unet.check_layout(tape.shape(state).1, &lens)?;
    let mut parts = vec![state];
    parts.extend_from_slice(hiddens);
    let input = tape.concat(&parts)?;
    Ok(unet.net.forward_tape(tape, bound, input)?.output)
}

/// Mean squared error between signals and reconstructions, averaged over
/// components and over steps. Zero-dimensional signals give exactly 0.
pub fn mi_loss(signals: &[Vec<f64>], reconstructions: &[Vec<f64>]) -> Result<f64> {
    if signals.len() != reconstructions.len() {
        return Err(Error::InputShape(format!(
            "{} signals but {} reconstructions",
            signals.len(),
            reconstructions.len()
        )));
    }
    let mut total = 0.0;
    let mut steps = 0usize;
    for (z, zr) in signals.iter().zip(reconstructions) {
        if z.len() != zr.len() {
            return Err(Error::InputShape(format!(
                "signal of length {} vs reconstruction of length {}",
                z.len(),
                zr.len()
            )));
        }
        if z.is_empty() {
            continue;
        }
        let mse = z.iter().zip(zr).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / z.len() as f64;
        total += mse;
        steps += 1;
    }
    Ok(if steps == 0 { 0.0 } else { total / steps as f64 })
}

/// Recorded version of [`mi_loss`] for equally shaped `rows × D_z` nodes.
pub fn mi_loss_tape(tape: &mut Tape, signals: Var, reconstruction: Var) -> Result<Var> {
    if tape.shape(signals) != tape.shape(reconstruction) {
        return Err(Error::InputShape(format!(
            "signals {:?} vs reconstruction {:?}",
            tape.shape(signals),
            tape.shape(reconstruction)
        )));
    }
    tape.mse(signals, reconstruction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_dim_signal_is_empty_and_draws_nothing() {
        let mut a = ChaCha8Rng::seed_from_u64(1);
        let b = a.clone();
        assert_eq!(sample_signal(0, &mut a).dim(), 0);
        assert_eq!(a, b);
    }

    #[test]
    fn signal_is_seed_deterministic() {
        let s1 = sample_signal(5, &mut ChaCha8Rng::seed_from_u64(3));
        let s2 = sample_signal(5, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(s1, s2);
    }

    #[test]
    fn loss_examples() {
        assert_eq!(mi_loss(&[vec![0.3, -1.0]], &[vec![0.3, -1.0]]).unwrap(), 0.0);
        assert_eq!(mi_loss(&[vec![0.0, 0.0]], &[vec![1.0, 1.0]]).unwrap(), 1.0);
        // per-step MSEs 0.5 and 1.5
        let z = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        let zr = vec![vec![1.0, 0.0], vec![1.0, 2f64.sqrt()]];
        assert!((mi_loss(&z, &zr).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(mi_loss(&[vec![]], &[vec![]]).unwrap(), 0.0);
        assert!(matches!(mi_loss(&[vec![1.0]], &[vec![1.0, 2.0]]), Err(Error::InputShape(_))));
    }

    #[test]
    fn zero_weight_reconstruction_is_bias() {
        let mut unet = UNet::new(3, &[2, 2], &[4], 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for t in unet.net.params_mut() {
            t.values.iter_mut().for_each(|v| *v = 0.0);
        }
        let last = unet.net.params().len() - 1;
        unet.net.params_mut()[last].values = vec![0.5, -0.5];
        let z = unet.reconstruct(&[1.0, 2.0, 3.0], &[vec![4.0, 5.0], vec![-1.0, 0.0]]).unwrap();
        assert_eq!(z, vec![0.5, -0.5]);
    }

    #[test]
    fn hidden_block_order_matters() {
        let unet = UNet::new(1, &[3, 3], &[8], 2, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let h1 = vec![0.2, 0.9, -0.4];
        let h2 = vec![-0.7, 0.1, 0.5];
        let a = unet.reconstruct(&[1.0], &[h1.clone(), h2.clone()]).unwrap();
        let b = unet.reconstruct(&[1.0], &[h2, h1]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn layout_mismatch_is_rejected() {
        let unet = UNet::new(2, &[3], &[4], 2, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!(matches!(
            unet.reconstruct(&[1.0], &[vec![0.0; 3]]),
            Err(Error::InputShape(_))
        ));
    }
}
