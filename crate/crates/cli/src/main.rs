use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowmap_core::experiment::{run_stage, ExperimentConfig, RunOptions, Scale, Stage};
use flowmap_core::testbed::SdeId;
use flowmap_core::Error;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Learn stochastic flow maps from trajectory data and evaluate them.
#[derive(Parser)]
#[command(name = "flowmap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the training trajectories.
    Generate(RunArgs),
    /// Fit the mean map with the multistep loss.
    TrainDet(RunArgs),
    /// Fit the noise map adversarially.
    TrainGan(RunArgs),
    /// Roll the learned and true systems forward and record statistics.
    Simulate(RunArgs),
    /// Estimate one-step drift, diffusion and conditional laws.
    Diagnose(RunArgs),
    /// Collect outputs into report/index.md.
    Report(RunArgs),
    /// Run every stage in order.
    All(RunArgs),
    /// Run the stage named by --stage.
    Run {
        #[arg(long)]
        stage: Stage,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Print a preset configuration as TOML.
    Preset {
        sde: SdeId,
        #[arg(long, default_value = "desk")]
        scale: Scale,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Use a built-in preset instead of a file.
    #[arg(long)]
    preset: Option<SdeId>,
    #[arg(long, default_value = "desk", requires = "preset")]
    scale: Scale,
    /// Replace the master seed and re-derive all stage seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: runs/<config name>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Allow overwriting artifacts produced under a different configuration.
    #[arg(long = "override")]
    override_hash: bool,
    /// Skip stages whose recorded outputs are intact.
    #[arg(long)]
    resume: bool,
}

impl RunArgs {
    fn config(&self) -> flowmap_core::Result<ExperimentConfig> {
        let cfg = match (&self.config, self.preset) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                ExperimentConfig::from_toml(&text)?
            }
            (None, Some(id)) => ExperimentConfig::preset(id, self.scale, 0),
            (None, None) => unreachable!("clap requires one source"),
        };
        Ok(match self.seed {
            Some(seed) => cfg.with_seed(seed),
            None => cfg,
        })
    }
}

fn execute(stage: Stage, args: &RunArgs) -> flowmap_core::Result<()> {
    let cfg = args.config()?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    let opts = RunOptions {
        override_hash: args.override_hash,
        resume: args.resume,
    };
    for path in run_stage(&cfg, &out, stage, &opts)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::MissingArtifact { .. } => 3,
        Error::Divergence { .. } => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Preset { sde, scale, seed } => {
            print!("{}", ExperimentConfig::preset(*sde, *scale, *seed).to_toml());
            Ok(())
        }
        Command::Run { stage, args } => execute(*stage, args),
        Command::Generate(a) => execute(Stage::Generate, a),
        Command::TrainDet(a) => execute(Stage::TrainDet, a),
        Command::TrainGan(a) => execute(Stage::TrainGan, a),
        Command::Simulate(a) => execute(Stage::Simulate, a),
        Command::Diagnose(a) => execute(Stage::Diagnose, a),
        Command::Report(a) => execute(Stage::Report, a),
        Command::All(a) => execute(Stage::All, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
