//! Analyses of trained teams: joint-policy space checks, signal probes,
//! predator-prey tournaments, collision maps and the signal-dimension sweep,
//! plus their CSV exports.

use std::path::Path;

use crate::error::Result;
use crate::experiment::csv_err;

mod probe;
mod sweep;
mod theory;
mod tournament;

pub use probe::{
    conditional_joint, joint_index, joint_policy_frequencies, mutual_information,
    probe_signal_partition, reconstruction_error, PartitionProbe, ReconstructionScore,
};
pub use sweep::{sensitivity_sweep, SweepCell, SweepResult};
pub use theory::{
    assign_region, product_fit, signal_realization_check, JointDistribution, ProductFit,
    SignalRealization,
};
pub use tournament::{
    collision_heatmap, cross_play, cross_play_runs, load_run, load_run_file, mean_std,
    CollisionRecord, CrossPlayResult, LoadedRun,
};

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// `pairing,seed,score`
pub fn write_crossplay_csv(path: &Path, results: &[CrossPlayResult]) -> Result<()> {
    write_rows(
        path,
        &strings(&["pairing", "seed", "score"]),
        results.iter().flat_map(|r| {
            let pairing = format!("{}-vs-{}", r.predator_model, r.prey_model);
            r.seeds
                .iter()
                .zip(&r.per_seed)
                .map(move |(s, v)| vec![pairing.clone(), s.to_string(), v.to_string()])
        }),
    )
}

/// `z1,…,zD,joint_action`
pub fn write_partition_csv(path: &Path, probe: &PartitionProbe) -> Result<()> {
    let dz = probe.samples.first().map_or(0, |(z, _)| z.len());
    let mut header: Vec<String> = (1..=dz).map(|i| format!("z{i}")).collect();
    header.push("joint_action".into());
    write_rows(
        path,
        &header,
        probe.samples.iter().map(|(z, a)| {
            let mut row: Vec<String> = z.iter().map(f64::to_string).collect();
            row.push(a.to_string());
            row
        }),
    )
}

/// `episode,matrix_id,p1,…,pK`
pub fn write_policyfreq_csv(path: &Path, rows: &[(usize, usize, JointDistribution)]) -> Result<()> {
    let k = rows.first().map_or(4, |(_, _, d)| d.probs.len());
    let mut header = strings(&["episode", "matrix_id"]);
    header.extend((1..=k).map(|i| format!("p{i}")));
    write_rows(
        path,
        &header,
        rows.iter().map(|(e, m, d)| {
            let mut row = vec![e.to_string(), m.to_string()];
            row.extend(d.probs.iter().map(f64::to_string));
            row
        }),
    )
}

/// `episode,step,predator_id,prey_id,x,y`
pub fn write_collisions_csv(path: &Path, records: &[CollisionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if records.is_empty() {
        w.write_record(["episode", "step", "predator_id", "prey_id", "x", "y"])
            .map_err(csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `D_z,seed,score`
pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<()> {
    write_rows(
        path,
        &strings(&["D_z", "seed", "score"]),
        sweep
            .cells
            .iter()
            .map(|c| vec![c.signal_dim.to_string(), c.seed.to_string(), c.score.to_string()]),
    )
}
