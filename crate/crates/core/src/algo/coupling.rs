//! The signal coupling term shared by every SIC learner.

use rand::Rng;

use crate::autodiff::{AdamState, BoundParams, Gradients, Tape, Var};
use crate::error::Result;
use crate::signal::{mi_loss_tape, unet_reconstruct, UNet};

/// Reconstruction network, its optimizer state and the loss weight α.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalCoupling {
    pub unet: UNet,
    pub adam: AdamState,
    pub alpha: f64,
}

/// Tape handles of one recorded coupling loss.
pub struct CouplingNodes {
    pub bound: BoundParams,
    pub loss: Var,
}

impl SignalCoupling {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden_dims: &[usize],
        layers: &[usize],
        signal_dim: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let unet = UNet::new(state_dim, hidden_dims, layers, signal_dim, rng)?;
        let adam = AdamState::new(unet.net.param_count());
        Ok(Self { unet, adam, alpha })
    }

    /// Records `L_I` for a batch: `state` is `rows × state_dim`, `signals`
    /// `rows × D_z`, `hiddens` one node per teammate.
    pub fn record(&self, tape: &mut Tape, state: Var, hiddens: &[Var], signals: Var) -> Result<CouplingNodes> {
        let bound = self.unet.net.bind(tape);
        let recon = unet_reconstruct(tape, &self.unet, &bound, state, hiddens)?;
        let loss = mi_loss_tape(tape, signals, recon)?;
        Ok(CouplingNodes { bound, loss })
    }

    /// Adds `α·L_I` to a policy objective. With α = 0 the objective is
    /// returned untouched so the policy gradient is exactly the base one.
    pub fn weighted(&self, tape: &mut Tape, objective: Var, nodes: &CouplingNodes) -> Result<Var> {
        if self.alpha == 0.0 {
            return Ok(objective);
        }
        let scaled = tape.scale(nodes.loss, self.alpha);
        tape.add(objective, scaled)
    }

    /// Minimizes `L_I` over the reconstruction parameters.
    pub fn step(&mut self, tape: &Tape, nodes: &CouplingNodes, lr: f64, clip: Option<f64>) -> Result<()> {
        let grads: Gradients = tape.backward(nodes.loss)?;
        self.unet.net.accumulate_grads(&nodes.bound, &grads);
        let res = crate::autodiff::adam_step(self.unet.net.params_mut(), &mut self.adam, lr, clip);
        self.unet.net.zero_grad();
        res
    }
}
