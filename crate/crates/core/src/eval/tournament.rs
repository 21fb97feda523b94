//! Predator-prey cross-play and collision maps.

use std::path::Path;

use crate::algo::{play_episode, ActMode, EpisodeOptions, TeamLearner};
use crate::checkpoint::Checkpoint;
use crate::config::{ExperimentConfig, Scenario};
use crate::env::{particle_reset, ParticleConfig, PredatorPrey};
use crate::error::{Error, Result};
use crate::exec::map_indices;
use crate::rng::{stream, RunStreams};

/// Learners of a trained run, rebuilt from its checkpoint.
pub struct LoadedRun {
    pub config: ExperimentConfig,
    pub learners: Vec<Box<dyn TeamLearner>>,
}

pub fn load_run(checkpoint: &Checkpoint) -> Result<LoadedRun> {
    let config = ExperimentConfig::from_toml(&checkpoint.config)?;
    let mut learners = config.build_untrained_learners()?;
    checkpoint.apply(&mut learners)?;
    Ok(LoadedRun { config, learners })
}

pub fn load_run_file(path: &Path) -> Result<LoadedRun> {
    load_run(&Checkpoint::load(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossPlayResult {
    pub predator_model: String,
    pub prey_model: String,
    pub seeds: Vec<u64>,
    /// Collisions per 100 episodes, one entry per seed.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len().max(1) as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Collisions per 100 episodes of frozen `predators` (team 0) against
/// frozen `preys` (team 1), one score per seed. Seeds run concurrently;
/// each score depends only on the two learners and its seed.
pub fn cross_play(
    predators: &dyn TeamLearner,
    preys: &dyn TeamLearner,
    world: &ParticleConfig,
    n_episodes: usize,
    seeds: &[u64],
) -> Result<CrossPlayResult> {
    if predators.spec().team != 0 || preys.spec().team != 1 {
        return Err(Error::Config("cross-play needs a predator team 0 and a prey team 1".into()));
    }
    if n_episodes == 0 || seeds.is_empty() {
        return Err(Error::Parameter("cross-play needs episodes and seeds".into()));
    }
    let learners: [&dyn TeamLearner; 2] = [predators, preys];
    let scores = map_indices(seeds.len(), |i| -> Result<f64> {
        let mut env = PredatorPrey::new(world.clone())?;
        let mut streams = RunStreams::new(seeds[i], 2);
        let mut collisions = 0usize;
        for episode in 0..n_episodes {
            let opts = EpisodeOptions {
                episode,
                mode: ActMode::Sample,
                record_hidden: false,
            };
            collisions += play_episode(&mut env, &learners, &mut streams, opts)?.trajectory.collisions.len();
        }
        Ok(100.0 * collisions as f64 / n_episodes as f64)
    });
    let per_seed = scores.into_iter().collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&per_seed);
    Ok(CrossPlayResult {
        predator_model: predators.algorithm().to_string(),
        prey_model: preys.algorithm().to_string(),
        seeds: seeds.to_vec(),
        per_seed,
        mean,
        std,
    })
}

/// Cross-play between the predators of one run and the preys of another.
pub fn cross_play_runs(
    predator_run: &LoadedRun,
    prey_run: &LoadedRun,
    n_episodes: usize,
    seeds: &[u64],
) -> Result<CrossPlayResult> {
    for run in [predator_run, prey_run] {
        if run.config.scenario != Scenario::PredatorPrey {
            return Err(Error::Config(format!(
                "cross-play needs predator-prey runs, got {}",
                run.config.scenario.name()
            )));
        }
    }
    if predator_run.config.world != prey_run.config.world {
        return Err(Error::Config("the two runs use different worlds".into()));
    }
    cross_play(
        predator_run.learners[0].as_ref(),
        prey_run.learners[1].as_ref(),
        &predator_run.config.world,
        n_episodes,
        seeds,
    )
}

/// One collision event of a heatmap run.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CollisionRecord {
    pub episode: usize,
    pub step: usize,
    pub predator_id: usize,
    pub prey_id: usize,
    pub x: f64,
    pub y: f64,
}

/// Plays `n_games` games from one fixed initial layout (drawn from
/// `layout_seed`) and records every collision position.
pub fn collision_heatmap(
    predators: &dyn TeamLearner,
    preys: &dyn TeamLearner,
    world: &ParticleConfig,
    n_games: usize,
    layout_seed: u64,
    seed: u64,
) -> Result<Vec<CollisionRecord>> {
    let layout = particle_reset(world, &mut stream(layout_seed, "layout"))?;
    let mut env = PredatorPrey::new(world.clone())?.with_fixed_layout(layout);
    let mut streams = RunStreams::new(seed, 2);
    let learners: [&dyn TeamLearner; 2] = [predators, preys];
    let mut out = Vec::new();
    for episode in 0..n_games {
        let opts = EpisodeOptions {
            episode,
            mode: ActMode::Sample,
            record_hidden: false,
        };
        let traj = play_episode(&mut env, &learners, &mut streams, opts)?.trajectory;
        out.extend(traj.collisions.into_iter().map(|(step, c)| CollisionRecord {
            episode,
            step,
            predator_id: c.predator,
            prey_id: c.prey,
            x: c.position[0],
            y: c.position[1],
        }));
    }
    Ok(out)
}
