use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sic::config::{load_config, ExperimentConfig, Scenario};
use sic::eval::{
    collision_heatmap, cross_play_runs, joint_policy_frequencies, load_run_file,
    probe_signal_partition, product_fit, sensitivity_sweep, signal_realization_check,
    write_collisions_csv, write_crossplay_csv, write_partition_csv, write_policyfreq_csv,
    write_sweep_csv, JointDistribution,
};
use sic::experiment::run_experiment;
use sic::rng::stream;
use sic::{Error, Result};

/// Distance from diag(0.5, 0.5) to the nearest product distribution,
/// pinned from a brute-force grid.
const DIAG_PRODUCT_ERROR: f64 = 0.5;

#[derive(Parser)]
#[command(name = "sic", version, about = "Signal-instructed coordination experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and write a run directory.
    Train(TrainArgs),
    /// Cross-play predators of one run against the preys of another.
    Eval(EvalArgs),
    /// Probe how a trained team's joint action depends on the signal.
    Probe(ProbeArgs),
    /// Record collision positions over many games from one fixed layout.
    Heatmap(HeatmapArgs),
    /// Train team 0 for several signal dimensions and score each.
    Sweep(SweepArgs),
    /// Product-fit and signal-realization checks on the diagonal example.
    TheoryCheck(TheoryArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    /// Resume from this checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Run whose predators play.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Run whose preys play; defaults to the predator run.
    #[arg(long)]
    prey_checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    /// First evaluation seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    n_seeds: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value_t = 0)]
    team: usize,
    #[arg(long, default_value_t = 5000)]
    signals: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample actions instead of taking each agent's argmax.
    #[arg(long)]
    sampled: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    prey_checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    layout_seed: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Base config; team 1 is usually frozen from a checkpoint.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0,5,10,20")]
    dims: Vec<i64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    seeds: Vec<u64>,
    /// Training episodes per cell.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value_t = 500)]
    eval_episodes: usize,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, default_value_t = 1_000_000)]
    signals: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn train(args: TrainArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.episodes {
        config.episodes = n;
    }
    config.validate()?;
    let out = args
        .out
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", config.scenario.name(), config.seed)));
    let summary = run_experiment(&config, &out, args.checkpoint.as_deref())?;
    println!("run directory: {}", summary.out_dir.display());
    println!(
        "mean reward over the last 10% of {} episodes: team0 {:.4}, team1 {:.4}",
        summary.episodes, summary.final_rewards[0], summary.final_rewards[1]
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let predators = load_run_file(&args.checkpoint)?;
    let preys = match &args.prey_checkpoint {
        Some(p) => load_run_file(p)?,
        None => load_run_file(&args.checkpoint)?,
    };
    let seeds: Vec<u64> = (args.seed..args.seed + args.n_seeds).collect();
    let result = cross_play_runs(&predators, &preys, args.episodes, &seeds)?;
    fs::create_dir_all(&args.out)?;
    write_crossplay_csv(&args.out.join("crossplay.csv"), std::slice::from_ref(&result))?;
    println!(
        "{} predators vs {} preys: {:.2} ± {:.2} collisions per 100 episodes",
        result.predator_model, result.prey_model, result.mean, result.std
    );
    Ok(())
}

fn probe(args: ProbeArgs) -> Result<()> {
    let run = load_run_file(&args.checkpoint)?;
    let learner = run
        .learners
        .get(args.team)
        .ok_or_else(|| Error::Config(format!("no team {}", args.team)))?;
    let policies = learner.policies();
    if learner.signal_dim() == 0 {
        return Err(Error::Config("checkpoint was trained without a signal".into()));
    }
    fs::create_dir_all(&args.out)?;
    let mut rng = stream(args.seed, "probe");
    match run.config.scenario {
        Scenario::Rpsw1Step => {
            let obs = vec![vec![1.0]; policies.len()];
            let probe = probe_signal_partition(policies, &obs, args.signals, &mut rng, !args.sampled)?;
            write_partition_csv(&args.out.join("partition.csv"), &probe)?;
            println!("joint-action frequencies: {:?}", probe.frequencies);
        }
        Scenario::Rpsw4Step => {
            let mut rows = Vec::new();
            for m in 1..=4 {
                let mut one_hot = vec![0.0; 4];
                one_hot[m - 1] = 1.0;
                let obs = vec![one_hot; policies.len()];
                let probe = probe_signal_partition(policies, &obs, args.signals, &mut rng, !args.sampled)?;
                write_partition_csv(&args.out.join(format!("partition_m{m}.csv")), &probe)?;
                let dist = joint_policy_frequencies(policies, &obs, args.signals, &mut rng)?;
                println!("M{m}: argmax frequencies {:?}, policy {:?}", probe.frequencies, dist.probs);
                rows.push((0, m, dist));
            }
            write_policyfreq_csv(&args.out.join("policyfreq.csv"), &rows)?;
        }
        Scenario::PredatorPrey => {
            return Err(Error::Config("probe supports the matrix games only".into()));
        }
    }
    Ok(())
}

fn heatmap(args: HeatmapArgs) -> Result<()> {
    let predators = load_run_file(&args.checkpoint)?;
    let preys = match &args.prey_checkpoint {
        Some(p) => load_run_file(p)?,
        None => load_run_file(&args.checkpoint)?,
    };
    if predators.config.scenario != Scenario::PredatorPrey || predators.config.world != preys.config.world {
        return Err(Error::Config("heatmap needs two predator-prey runs of the same world".into()));
    }
    let records = collision_heatmap(
        predators.learners[0].as_ref(),
        preys.learners[1].as_ref(),
        &predators.config.world,
        args.episodes,
        args.layout_seed,
        args.seed,
    )?;
    fs::create_dir_all(&args.out)?;
    write_collisions_csv(&args.out.join("collisions.csv"), &records)?;
    println!("{} collisions over {} games", records.len(), args.episodes);
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let mut base: ExperimentConfig = load_config(&args.config)?;
    if let Some(n) = args.episodes {
        base.episodes = n;
    }
    let result = sensitivity_sweep(&base, &args.dims, &args.seeds, args.eval_episodes)?;
    fs::create_dir_all(&args.out)?;
    write_sweep_csv(&args.out.join("sweep.csv"), &result)?;
    for (dz, r) in &result.per_dim {
        println!("D_z = {dz}: {:.2} ± {:.2}", r.mean, r.std);
    }
    Ok(())
}

fn theory_check(args: TheoryArgs) -> Result<()> {
    let diag = JointDistribution::new(vec![0.5, 0.0, 0.0, 0.5])?;
    let fit = product_fit(&diag)?;
    println!(
        "product fit of diag(0.5, 0.5): error {:.6} (pinned {DIAG_PRODUCT_ERROR}), p = {:?}, q = {:?}",
        fit.error, fit.p, fit.q
    );
    let realized = signal_realization_check(&diag, args.signals, args.seed)?;
    println!(
        "signal realization of diag(0.5, 0.5) with {} signals: max error {:.6} (bound {:.6})",
        args.signals,
        realized.max_error,
        2.0 / (args.signals as f64).sqrt()
    );
    let three = JointDistribution::new(vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0])?;
    let realized = signal_realization_check(&three, args.signals, args.seed)?;
    println!("signal realization of (1/3, 1/3, 1/3, 0): max error {:.6}", realized.max_error);
    if (fit.error - DIAG_PRODUCT_ERROR).abs() > 1e-4 {
        return Err(Error::Numerical("product fit disagrees with the pinned value".into()));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Probe(a) => probe(a),
        Command::Heatmap(a) => heatmap(a),
        Command::Sweep(a) => sweep(a),
        Command::TheoryCheck(a) => theory_check(a),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 3,
        Error::Checkpoint(_) => 4,
        Error::Io(_) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

