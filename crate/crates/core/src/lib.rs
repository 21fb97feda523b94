//! Signal-instructed coordination for cooperative multi-agent reinforcement
//! learning.
//!
//! A team of decentralized agents shares a random coordination signal drawn
//! once per episode. A centralized reconstruction network (the "U-Net") tries
//! to recover the signal from the agents' hidden activations, and its error
//! is added to each policy objective, tying the agents' behaviour to the
//! signal. The crate provides the numerical core, the matrix games and the
//! predator-prey particle world, REINFORCE / MADDPG / COMA learners with and
//! without the signal, and the evaluation tooling.

pub mod algo;
pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod env;
mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};
