//! Episodic multi-team environments.
//!
//! Agents are numbered globally; each team owns a contiguous range of agent
//! indices. Team 0 is the row team / predators, team 1 the column team /
//! preys.

use std::ops::Range;

use crate::error::Result;
use crate::rng::StreamRng;

pub mod matrix;
pub mod particle;

pub use matrix::{
    build_matrix_set, rpsw_payoff, JointAction, MatrixGameState, MultiStepGame, OneStepRpsw,
    PayoffMatrix,
};
pub use particle::{
    detect_collisions, observe, particle_reset, particle_step, CollisionEvent, Entity,
    ParticleConfig, ParticleWorldState, PredatorPrey, Role,
};

/// Outcome of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
    pub collisions: Vec<CollisionEvent>,
}

pub trait Environment {
    fn n_agents(&self) -> usize;

    /// Agent index range of every team.
    fn teams(&self) -> Vec<Range<usize>>;

    fn n_actions(&self) -> usize;

    fn obs_dim(&self, agent: usize) -> usize;

    fn episode_length(&self) -> usize;

    /// Starts a new episode and returns one observation per agent.
    fn reset(&mut self, rng: &mut StreamRng) -> Result<Vec<Vec<f64>>>;

    fn step(&mut self, actions: &[usize], rng: &mut StreamRng) -> Result<StepResult>;
}
