//! Command-line front end: train models, evaluate checkpoints, sweep
//! model axes, check gradients, and preview encodings.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use spikeglm::error::{Error, Result};

use spikeglm_cli::config::ExperimentConfig;
use spikeglm_cli::ops::{self, SweepAxis};

#[derive(Parser)]
#[command(name = "spikeglm", version, about = "Probabilistic spiking-network training and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model per a config file and write a checkpoint.
    Train(RunArgs),
    /// Evaluate a trained checkpoint on the held-out test split.
    Eval(RunArgs),
    /// Train and evaluate one model per value along a model axis.
    Sweep(SweepArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Print one training example's encoded spike trains.
    EncodePreview(PreviewArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Which model axis to vary.
    #[arg(long)]
    axis: Axis,
    /// Axis values, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    /// Basis-function count (horizon held fixed).
    K,
    /// Horizon, with K set equal to it.
    T,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TrainerChoice {
    Both,
    Conventional,
    FirstToSpike,
}

#[derive(clap::Args)]
struct GradcheckArgs {
    /// Random instances to draw.
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long, value_enum, default_value_t = TrainerChoice::Both)]
    trainer: TrainerChoice,
}

#[derive(clap::Args)]
struct PreviewArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Training-example index to preview.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// How many input trains to print (most active first).
    #[arg(long, default_value_t = 16)]
    rows: usize,
}

impl RunArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.output_dir {
            cfg.output.dir = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Domain(_) => 2,
        Error::Io(_) | Error::Format(_) => 3,
        Error::Numeric(_) => 4,
        Error::Consistency(_) | Error::Capacity(_) | Error::Shape(_) => 5,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => {
            let cfg = args.load()?;
            let outcome = ops::run_train(&cfg)?;
            println!("trained with eta {:e}", outcome.selected_eta);
            println!("checkpoint: {}", outcome.checkpoint_path.display());
            println!("curve: {}", outcome.curve_path.display());
        }
        Command::Eval(args) => {
            let cfg = args.load()?;
            let rows = ops::run_eval(&cfg)?;
            for row in &rows {
                println!(
                    "{}: accuracy {:.4}, mean ops {:.1}, mean decision time {:.2}, fallback {:.3}",
                    row.decoder, row.accuracy, row.mean_ops, row.mean_decision_time,
                    row.fallback_fraction
                );
            }
            println!("results appended to {}", cfg.results_path().display());
        }
        Command::Sweep(args) => {
            let cfg = args.run.load()?;
            let axis = match args.axis {
                Axis::K => SweepAxis::K,
                Axis::T => SweepAxis::T,
            };
            let rows = ops::run_sweep(&cfg, axis, &args.values)?;
            for row in &rows {
                println!(
                    "K={} T={} {}: accuracy {:.4}, mean ops {:.1}",
                    row.k, row.t, row.decoder, row.accuracy, row.mean_ops
                );
            }
        }
        Command::Gradcheck(args) => {
            let (conventional, first_to_spike) = match args.trainer {
                TrainerChoice::Both => (true, true),
                TrainerChoice::Conventional => (true, false),
                TrainerChoice::FirstToSpike => (false, true),
            };
            let summaries = ops::run_gradcheck(
                args.instances,
                args.seed,
                args.step,
                conventional,
                first_to_spike,
            )?;
            let mut worst: f64 = 0.0;
            for s in &summaries {
                println!(
                    "{}: {} instances, max relative error {:.3e} at {} (step {:e})",
                    s.trainer, s.instances, s.max_rel_error, s.worst_coordinate, s.step
                );
                worst = worst.max(s.max_rel_error);
            }
            if worst > args.tolerance {
                return Err(Error::Numeric(format!(
                    "max relative error {worst:.3e} exceeds tolerance {:e}",
                    args.tolerance
                )));
            }
            println!("gradients agree within {:e}", args.tolerance);
        }
        Command::EncodePreview(args) => {
            let cfg = args.run.load()?;
            print!("{}", ops::run_encode_preview(&cfg, args.index, args.rows)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
