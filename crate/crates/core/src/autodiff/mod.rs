//! Reverse-mode autodiff, dense networks, Adam and the Gumbel-softmax
//! relaxation.

mod adam;
mod gumbel;
mod mlp;
mod tape;

pub use adam::{adam_step, global_grad_norm, AdamState};
pub use gumbel::{gumbel_noise, gumbel_softmax_sample, gumbel_softmax_tape, relaxed_with_noise};
pub use mlp::{
    forward_batch, mlp_forward, Activation, BoundParams, Mlp, MlpNodes, MlpSpec, OutputActivation,
    Tensor,
};
pub use tape::{Gradients, Tape, Var};

/// A network together with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainable {
    pub net: Mlp,
    pub adam: AdamState,
}

impl Trainable {
    pub fn new(net: Mlp) -> Self {
        let adam = AdamState::new(net.param_count());
        Self { net, adam }
    }

    /// Applies Adam to the accumulated gradients, then clears them.
    pub fn step(&mut self, lr: f64, clip_norm: Option<f64>) -> crate::Result<()> {
        let res = adam_step(self.net.params_mut(), &mut self.adam, lr, clip_norm);
        self.net.zero_grad();
        res
    }
}
