//! Two-versus-two Rock-Paper-Scissors-Well, one-step and multi-step.
//!
//! Each agent picks Yield (0) or Access (1). A team's joint action index is
//! `2·a₀ + a₁`, giving Rock (Y,Y)=0, Paper (Y,A)=1, Scissors (A,Y)=2 and
//! Well (A,A)=3.

use std::ops::Range;

use rand::Rng;

use super::{Environment, StepResult};
use crate::error::{Error, Result};
use crate::rng::StreamRng;

pub const YIELD: usize = 0;
pub const ACCESS: usize = 1;
pub const N_JOINT: usize = 4;
pub const MULTISTEP_LENGTH: usize = 4;

/// Row-team reward of the base game; the column team gets the negation.
const RPSW_ROW: [[f64; 4]; 4] = [
    [0.0, 1.0, -1.0, 1.0],
    [-1.0, 0.0, 1.0, 1.0],
    [1.0, -1.0, 0.0, -1.0],
    [-1.0, -1.0, 1.0, 0.0],
];

/// Per-agent action indices of one team.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointAction {
    pub actions: Vec<usize>,
}

impl JointAction {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    /// Builds the two-agent joint action with the given index.
    pub fn from_index(index: usize) -> Self {
        Self::new(vec![index / 2, index % 2])
    }

    /// Mixed-radix index with the first agent most significant.
    pub fn index(&self, n_actions: usize) -> usize {
        self.actions.iter().fold(0, |acc, &a| acc * n_actions + a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffMatrix {
    pub id: usize,
    /// `(row reward, column reward)` by `[row joint][column joint]`.
    pub entries: [[(f64, f64); 4]; 4],
}

impl PayoffMatrix {
    pub fn get(&self, row: usize, col: usize) -> (f64, f64) {
        self.entries[row][col]
    }
}

fn base_matrix() -> PayoffMatrix {
    let mut entries = [[(0.0, 0.0); 4]; 4];
    for (i, row) in RPSW_ROW.iter().enumerate() {
        for (j, &r) in row.iter().enumerate() {
            entries[i][j] = (r, -r);
        }
    }
    PayoffMatrix { id: 4, entries }
}

fn joint_index(joint: &JointAction) -> Result<usize> {
    if joint.actions.len() != 2 || joint.actions.iter().any(|&a| a > ACCESS) {
        return Err(Error::Action {
            agent: 0,
            action: joint.actions.iter().copied().max().unwrap_or(0),
            n_actions: 2,
        });
    }
    Ok(joint.index(2))
}

/// Payoff of the base game for a pair of team joint actions.
pub fn rpsw_payoff(row: &JointAction, col: &JointAction) -> Result<(f64, f64)> {
    Ok(base_matrix().get(joint_index(row)?, joint_index(col)?))
}

/// `{M1, M2, M3, M4}`: `M4` is the base game, `Mi` swaps row 4 with row `i`
/// and then column 4 with column `i`.
pub fn build_matrix_set() -> [PayoffMatrix; 4] {
    let base = base_matrix();
    std::array::from_fn(|k| {
        let mut m = base.clone();
        m.id = k + 1;
        if k != 3 {
            m.entries.swap(3, k);
            for row in m.entries.iter_mut() {
                row.swap(3, k);
            }
        }
        m
    })
}

fn one_hot(id: usize) -> Vec<f64> {
    let mut v = vec![0.0; 4];
    v[id - 1] = 1.0;
    v
}

fn split_actions(actions: &[usize]) -> Result<(JointAction, JointAction)> {
    if actions.len() != 4 {
        return Err(Error::InputShape(format!("expected 4 actions, got {}", actions.len())));
    }
    for (agent, &action) in actions.iter().enumerate() {
        if action > ACCESS {
            return Err(Error::Action {
                agent,
                action,
                n_actions: 2,
            });
        }
    }
    Ok((
        JointAction::new(actions[..2].to_vec()),
        JointAction::new(actions[2..].to_vec()),
    ))
}

fn team_rewards(row: f64, col: f64) -> Vec<f64> {
    vec![row, row, col, col]
}

/// Single-shot game with a constant dummy observation.
#[derive(Debug, Clone, Default)]
pub struct OneStepRpsw {
    done: bool,
}

impl OneStepRpsw {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Environment for OneStepRpsw {
    fn n_agents(&self) -> usize {
        4
    }

    fn teams(&self) -> Vec<Range<usize>> {
        vec![0..2, 2..4]
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn obs_dim(&self, _agent: usize) -> usize {
        1
    }

    fn episode_length(&self) -> usize {
        1
    }

    fn reset(&mut self, _rng: &mut StreamRng) -> Result<Vec<Vec<f64>>> {
        self.done = false;
        Ok(vec![vec![1.0]; 4])
    }

    fn step(&mut self, actions: &[usize], _rng: &mut StreamRng) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let (row, col) = split_actions(actions)?;
        let (r_row, r_col) = rpsw_payoff(&row, &col)?;
        self.done = true;
        Ok(StepResult {
            observations: vec![vec![1.0]; 4],
            rewards: team_rewards(r_row, r_col),
            done: true,
            collisions: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixGameState {
    pub step_index: usize,
    pub current_matrix_id: usize,
    pub accumulated_rewards: [f64; 2],
    pub done: bool,
}

impl MatrixGameState {
    pub fn observation(&self) -> Vec<f64> {
        one_hot(self.current_matrix_id)
    }
}

/// Four-step game where each step is played in a freshly drawn matrix and
/// the summed payoff is only paid at the end.
#[derive(Debug, Clone)]
pub struct MultiStepGame {
    matrices: [PayoffMatrix; 4],
    state: Option<MatrixGameState>,
    /// Per-step `(row, col)` payoffs of the current episode.
    pub step_payoffs: Vec<(f64, f64)>,
}

impl Default for MultiStepGame {
    fn default() -> Self {
        Self::new()
    }
}

impl MultiStepGame {
    pub fn new() -> Self {
        Self {
            matrices: build_matrix_set(),
            state: None,
            step_payoffs: Vec::new(),
        }
    }

    pub fn matrices(&self) -> &[PayoffMatrix; 4] {
        &self.matrices
    }

    pub fn state(&self) -> Option<&MatrixGameState> {
        self.state.as_ref()
    }

    /// Fresh episode with a uniformly drawn matrix; every agent observes the
    /// one-hot matrix id.
    pub fn multistep_reset<R: Rng + ?Sized>(rng: &mut R) -> (MatrixGameState, Vec<Vec<f64>>) {
        let state = MatrixGameState {
            step_index: 0,
            current_matrix_id: rng.random_range(1..=4),
            accumulated_rewards: [0.0, 0.0],
            done: false,
        };
        let obs = vec![state.observation(); 4];
        (state, obs)
    }

    /// Plays one step. Returns the next state, the terminal team rewards on
    /// the last step and `None` before it, and the per-step payoff.
    pub fn multistep_step<R: Rng + ?Sized>(
        &self,
        state: &MatrixGameState,
        row: &JointAction,
        col: &JointAction,
        rng: &mut R,
    ) -> Result<(MatrixGameState, Option<(f64, f64)>, (f64, f64))> {
        if state.done || state.step_index >= MULTISTEP_LENGTH {
            return Err(Error::EpisodeFinished);
        }
        let payoff = self.matrices[state.current_matrix_id - 1].get(joint_index(row)?, joint_index(col)?);
        let mut next = state.clone();
        next.accumulated_rewards[0] += payoff.0;
        next.accumulated_rewards[1] += payoff.1;
        next.step_index += 1;
        if next.step_index == MULTISTEP_LENGTH {
            next.done = true;
            let [r, c] = next.accumulated_rewards;
            Ok((next, Some((r, c)), payoff))
        } else {
            next.current_matrix_id = rng.random_range(1..=4);
            Ok((next, None, payoff))
        }
    }
}

impl Environment for MultiStepGame {
    fn n_agents(&self) -> usize {
        4
    }

    fn teams(&self) -> Vec<Range<usize>> {
        vec![0..2, 2..4]
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn obs_dim(&self, _agent: usize) -> usize {
        4
    }

    fn episode_length(&self) -> usize {
        MULTISTEP_LENGTH
    }

    fn reset(&mut self, rng: &mut StreamRng) -> Result<Vec<Vec<f64>>> {
        let (state, obs) = Self::multistep_reset(rng);
        self.state = Some(state);
        self.step_payoffs.clear();
        Ok(obs)
    }

    fn step(&mut self, actions: &[usize], rng: &mut StreamRng) -> Result<StepResult> {
        let state = self.state.as_ref().ok_or(Error::EpisodeFinished)?;
        let (row, col) = split_actions(actions)?;
        let (next, terminal, payoff) = self.multistep_step(state, &row, &col, rng)?;
        self.step_payoffs.push(payoff);
        let rewards = match terminal {
            Some((r, c)) => team_rewards(r, c),
            None => vec![0.0; 4],
        };
        let obs = vec![next.observation(); 4];
        let done = next.done;
        self.state = Some(next);
        Ok(StepResult {
            observations: obs,
            rewards,
            done,
            collisions: Vec::new(),
        })
    }
}
