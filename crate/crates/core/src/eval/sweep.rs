//! Signal-dimension sensitivity sweep.

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::exec::map_indices;
use crate::experiment::{train, MetricsRow};

use super::tournament::{cross_play, mean_std, CrossPlayResult};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub signal_dim: usize,
    pub seed: u64,
    pub score: f64,
    pub metrics: Vec<MetricsRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
    /// One entry per signal dimension, in input order.
    pub per_dim: Vec<(usize, CrossPlayResult)>,
}

/// Trains team 0 of `base` once per `(D_z, seed)` and scores the trained
/// predators against team 1 over `eval_episodes` episodes. `D_z = 0` also
/// sets α = 0, which runs the exact base-algorithm code path. Team 1 is
/// normally frozen from a checkpoint.
pub fn sensitivity_sweep(
    base: &ExperimentConfig,
    dims: &[i64],
    seeds: &[u64],
    eval_episodes: usize,
) -> Result<SweepResult> {
    if dims.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one signal dimension and seed".into()));
    }
    if let Some(d) = dims.iter().find(|&&d| d < 0) {
        return Err(Error::Config(format!("signal dimension {d} is negative")));
    }
    let dims: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
    let cells: Vec<(usize, u64)> = dims.iter().flat_map(|&d| seeds.iter().map(move |&s| (d, s))).collect();
    let results = map_indices(cells.len(), |i| -> Result<SweepCell> {
        let (dz, seed) = cells[i];
        let mut config = base.clone();
        config.seed = seed;
        config.team0.train.signal_dim = dz;
        if dz == 0 {
            config.team0.train.alpha = 0.0;
        }
        config.validate()?;
        let run = train(&config, None, &mut ())?;
        let score = cross_play(
            run.learners[0].as_ref(),
            run.learners[1].as_ref(),
            &config.world,
            eval_episodes,
            &[seed],
        )?
        .mean;
        Ok(SweepCell {
            signal_dim: dz,
            seed,
            score,
            metrics: run.metrics,
        })
    });
    let cells = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut per_dim = Vec::with_capacity(dims.len());
    for &dz in &dims {
        let scores: Vec<f64> = cells.iter().filter(|c| c.signal_dim == dz).map(|c| c.score).collect();
        let (mean, std) = mean_std(&scores);
        per_dim.push((
            dz,
            CrossPlayResult {
                predator_model: format!("{}(D_z={dz})", base.team0.algorithm),
                prey_model: base.team1.algorithm.to_string(),
                seeds: seeds.to_vec(),
                per_seed: scores,
                mean,
                std,
            },
        ));
    }
    Ok(SweepResult { cells, per_dim })
}
