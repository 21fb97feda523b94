//! Two-dimensional predator-prey particle world.
//!
//! `team_size` slow predators chase `team_size` fast preys around two large
//! landmarks. Every predator-prey overlap in a step is one collision event:
//! each predator gains `collision_reward` and each prey loses it.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, StepResult};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// Stop, +x, −x, +y, −y.
pub const N_MOVES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticleConfig {
    pub team_size: usize,
    pub n_landmarks: usize,
    pub episode_length: usize,
    pub dt: f64,
    pub damping: f64,
    pub accel_predator: f64,
    pub accel_prey: f64,
    pub max_speed_predator: f64,
    pub max_speed_prey: f64,
    pub radius_predator: f64,
    pub radius_prey: f64,
    pub radius_landmark: f64,
    pub half_extent: f64,
    pub contact_stiffness: f64,
    pub boundary_stiffness: f64,
    pub collision_reward: f64,
    pub max_placement_attempts: usize,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            team_size: 2,
            n_landmarks: 2,
            episode_length: 25,
            dt: 0.1,
            damping: 0.25,
            accel_predator: 3.0,
            accel_prey: 4.0,
            max_speed_predator: 1.0,
            max_speed_prey: 1.3,
            radius_predator: 0.075,
            radius_prey: 0.05,
            radius_landmark: 0.2,
            half_extent: 1.0,
            contact_stiffness: 100.0,
            boundary_stiffness: 100.0,
            collision_reward: 10.0,
            max_placement_attempts: 1000,
        }
    }
}

impl ParticleConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("team_size", self.team_size as f64),
            ("episode_length", self.episode_length as f64),
            ("dt", self.dt),
            ("radius_predator", self.radius_predator),
            ("radius_prey", self.radius_prey),
            ("radius_landmark", self.radius_landmark),
            ("half_extent", self.half_extent),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!("damping must lie in [0, 1), got {}", self.damping)));
        }
        if self.n_landmarks > 2 {
            return Err(Error::Config("at most 2 landmarks are supported".into()));
        }
        for (name, v) in [
            ("max_speed_predator", self.max_speed_predator),
            ("max_speed_prey", self.max_speed_prey),
            ("accel_predator", self.accel_predator),
            ("accel_prey", self.accel_prey),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        2 * self.team_size
    }

    fn role_of(&self, agent: usize) -> Role {
        if agent < self.team_size {
            Role::Predator
        } else {
            Role::Prey
        }
    }

    fn radius(&self, role: Role) -> f64 {
        match role {
            Role::Predator => self.radius_predator,
            Role::Prey => self.radius_prey,
            Role::Landmark => self.radius_landmark,
        }
    }

    fn accel(&self, role: Role) -> f64 {
        match role {
            Role::Predator => self.accel_predator,
            Role::Prey => self.accel_prey,
            Role::Landmark => 0.0,
        }
    }

    fn max_speed(&self, role: Role) -> f64 {
        match role {
            Role::Predator => self.max_speed_predator,
            Role::Prey => self.max_speed_prey,
            Role::Landmark => 0.0,
        }
    }

    /// Observation length of `agent`.
    pub fn obs_dim(&self, agent: usize) -> usize {
        let base = 4 + 2 * self.n_landmarks + 2 * (self.n_agents() - 1);
        match self.role_of(agent) {
            Role::Predator => base + 2 * self.team_size,
            _ => base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Predator,
    Prey,
    Landmark,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entity {
    pub role: Role,
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub radius: f64,
}

/// Agents are `0..team_size` (predators) then `team_size..2·team_size`
/// (preys); landmarks are kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleWorldState {
    pub agents: Vec<Entity>,
    pub landmarks: Vec<Entity>,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionEvent {
    pub predator: usize,
    pub prey: usize,
    /// Midpoint of the two centres.
    pub position: [f64; 2],
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Random layout with no landmark-agent overlap and zero velocities.
pub fn particle_reset<R: Rng + ?Sized>(config: &ParticleConfig, rng: &mut R) -> Result<ParticleWorldState> {
    config.validate()?;
    let h = config.half_extent;
    let attempts = config.max_placement_attempts;
    let mut landmarks: Vec<Entity> = Vec::with_capacity(config.n_landmarks);
    for _ in 0..config.n_landmarks {
        let mut placed = None;
        for _ in 0..attempts {
            let pos = [rng.random_range(-0.9 * h..0.9 * h), rng.random_range(-0.9 * h..0.9 * h)];
            if landmarks
                .iter()
                .all(|l| dist(l.pos, pos) >= 2.0 * config.radius_landmark)
            {
                placed = Some(pos);
                break;
            }
        }
        let pos = placed.ok_or(Error::Placement(attempts))?;
        landmarks.push(Entity {
            role: Role::Landmark,
            pos,
            vel: [0.0, 0.0],
            radius: config.radius_landmark,
        });
    }
    let mut agents = Vec::with_capacity(config.n_agents());
    for agent in 0..config.n_agents() {
        let role = config.role_of(agent);
        let radius = config.radius(role);
        let mut placed = None;
        for _ in 0..attempts {
            let pos = [rng.random_range(-h..h), rng.random_range(-h..h)];
            if landmarks.iter().all(|l| dist(l.pos, pos) >= l.radius + radius) {
                placed = Some(pos);
                break;
            }
        }
        let pos = placed.ok_or(Error::Placement(attempts))?;
        agents.push(Entity {
            role,
            pos,
            vel: [0.0, 0.0],
            radius,
        });
    }
    Ok(ParticleWorldState {
        agents,
        landmarks,
        step_index: 0,
    })
}

/// Every `(predator, prey)` pair whose discs strictly overlap, in ascending
/// id order.
pub fn detect_collisions(state: &ParticleWorldState) -> Vec<CollisionEvent> {
    let mut events = Vec::new();
    for (i, p) in state.agents.iter().enumerate().filter(|(_, e)| e.role == Role::Predator) {
        for (j, q) in state.agents.iter().enumerate().filter(|(_, e)| e.role == Role::Prey) {
            if dist(p.pos, q.pos) < p.radius + q.radius {
                events.push(CollisionEvent {
                    predator: i,
                    prey: j,
                    position: [(p.pos[0] + q.pos[0]) / 2.0, (p.pos[1] + q.pos[1]) / 2.0],
                });
            }
        }
    }
    events
}

fn action_direction(action: usize) -> [f64; 2] {
    match action {
        1 => [1.0, 0.0],
        2 => [-1.0, 0.0],
        3 => [0.0, 1.0],
        4 => [0.0, -1.0],
        _ => [0.0, 0.0],
    }
}

/// Advances the world by one step. Returns the next state, per-agent
/// rewards and the collision events of the new positions.
pub fn particle_step(
    config: &ParticleConfig,
    state: &ParticleWorldState,
    actions: &[usize],
) -> Result<(ParticleWorldState, Vec<f64>, Vec<CollisionEvent>)> {
    if actions.len() != state.agents.len() {
        return Err(Error::InputShape(format!(
            "expected {} actions, got {}",
            state.agents.len(),
            actions.len()
        )));
    }
    if let Some((agent, &action)) = actions.iter().enumerate().find(|(_, &a)| a >= N_MOVES) {
        return Err(Error::Action {
            agent,
            action,
            n_actions: N_MOVES,
        });
    }
    let mut next = state.clone();
    let h = config.half_extent;
    for (agent, &action) in next.agents.iter_mut().zip(actions) {
        let dir = action_direction(action);
        let accel = config.accel(agent.role);
        let mut force = [accel * dir[0], accel * dir[1]];
        for l in &state.landmarks {
            let d = dist(agent.pos, l.pos);
            let overlap = agent.radius + l.radius - d;
            if overlap > 0.0 {
                let n = if d > 0.0 {
                    [(agent.pos[0] - l.pos[0]) / d, (agent.pos[1] - l.pos[1]) / d]
                } else {
                    [1.0, 0.0]
                };
                force[0] += config.contact_stiffness * overlap * n[0];
                force[1] += config.contact_stiffness * overlap * n[1];
            }
        }
        for k in 0..2 {
            let excess = agent.pos[k].abs() - h;
            if excess > 0.0 {
                force[k] -= config.boundary_stiffness * excess * agent.pos[k].signum();
            }
        }
        for k in 0..2 {
            agent.vel[k] = agent.vel[k] * (1.0 - config.damping) + force[k] * config.dt;
        }
        let cap = config.max_speed(agent.role);
        let speed = (agent.vel[0].powi(2) + agent.vel[1].powi(2)).sqrt();
        if speed > cap {
            let s = if speed > 0.0 { cap / speed } else { 0.0 };
            agent.vel[0] *= s;
            agent.vel[1] *= s;
        }
        for k in 0..2 {
            agent.pos[k] += agent.vel[k] * config.dt;
        }
        if !(agent.pos[0].is_finite() && agent.pos[1].is_finite()) {
            return Err(Error::Numerical("non-finite particle position".into()));
        }
    }
    next.step_index += 1;
    let events = detect_collisions(&next);
    let bonus = config.collision_reward * events.len() as f64;
    let rewards = next
        .agents
        .iter()
        .map(|a| match a.role {
            Role::Predator => bonus,
            _ => -bonus,
        })
        .collect();
    Ok((next, rewards, events))
}

/// Observation of `agent`: own position and velocity, landmark offsets,
/// offsets of every other agent, then (for predators) prey velocities.
pub fn observe(config: &ParticleConfig, state: &ParticleWorldState, agent: usize) -> Vec<f64> {
    let me = &state.agents[agent];
    let mut obs = Vec::with_capacity(config.obs_dim(agent));
    obs.extend_from_slice(&me.pos);
    obs.extend_from_slice(&me.vel);
    for l in &state.landmarks {
        obs.push(l.pos[0] - me.pos[0]);
        obs.push(l.pos[1] - me.pos[1]);
    }
    for (j, other) in state.agents.iter().enumerate() {
        if j != agent {
            obs.push(other.pos[0] - me.pos[0]);
            obs.push(other.pos[1] - me.pos[1]);
        }
    }
    if me.role == Role::Predator {
        for other in state.agents.iter().filter(|e| e.role == Role::Prey) {
            obs.extend_from_slice(&other.vel);
        }
    }
    obs
}

/// [`Environment`] wrapper. With a fixed layout every episode restarts from
/// the same initial state.
#[derive(Debug, Clone)]
pub struct PredatorPrey {
    pub config: ParticleConfig,
    state: Option<ParticleWorldState>,
    fixed_layout: Option<ParticleWorldState>,
}

impl PredatorPrey {
    pub fn new(config: ParticleConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: None,
            fixed_layout: None,
        })
    }

    pub fn with_fixed_layout(mut self, layout: ParticleWorldState) -> Self {
        self.fixed_layout = Some(layout);
        self
    }

    pub fn state(&self) -> Option<&ParticleWorldState> {
        self.state.as_ref()
    }

    fn observe_all(&self, state: &ParticleWorldState) -> Vec<Vec<f64>> {
        (0..self.config.n_agents())
            .map(|i| observe(&self.config, state, i))
            .collect()
    }
}

impl Environment for PredatorPrey {
    fn n_agents(&self) -> usize {
        self.config.n_agents()
    }

    fn teams(&self) -> Vec<Range<usize>> {
        let m = self.config.team_size;
        vec![0..m, m..2 * m]
    }

    fn n_actions(&self) -> usize {
        N_MOVES
    }

    fn obs_dim(&self, agent: usize) -> usize {
        self.config.obs_dim(agent)
    }

    fn episode_length(&self) -> usize {
        self.config.episode_length
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Result<Vec<Vec<f64>>> {
        let state = match &self.fixed_layout {
            Some(layout) => layout.clone(),
            None => particle_reset(&self.config, rng)?,
        };
        let obs = self.observe_all(&state);
        self.state = Some(state);
        Ok(obs)
    }

    fn step(&mut self, actions: &[usize], _rng: &mut StreamRng) -> Result<StepResult> {
        let state = self.state.as_ref().ok_or(Error::EpisodeFinished)?;
        if state.step_index >= self.config.episode_length {
            return Err(Error::EpisodeFinished);
        }
        let (next, rewards, collisions) = particle_step(&self.config, state, actions)?;
        let done = next.step_index >= self.config.episode_length;
        let observations = self.observe_all(&next);
        self.state = Some(next);
        Ok(StepResult {
            observations,
            rewards,
            done,
            collisions,
        })
    }
}
