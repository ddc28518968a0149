//! Command-line front end for the sentiment inference cascade: threshold
//! calibration, routed runs, evaluation, ablations, and synthetic data
//! generation.

mod commands;
mod config;
mod context;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{CommonArgs, RunConfig};

#[derive(Parser)]
#[command(
    name = "cascade",
    version,
    about = "Uncertainty-routed two-model inference cascade for sentiment regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute routing thresholds from a labeled validation dataset.
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        /// Where to write the calibration artifact (JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Route a dataset through the cascade and write one trace per sample.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Calibration artifact with the routing thresholds.
        #[arg(long)]
        calibration: Option<PathBuf>,
        /// Where to write the trace file (line-delimited JSON).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a trace file against its dataset's ground truths.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Trace file produced by `run`.
        #[arg(long)]
        traces: PathBuf,
        /// Output prefix; writes <out>.json and <out>.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the full system against its ablated variants.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        /// Labeled validation dataset used to (re)calibrate thresholds.
        #[arg(long)]
        val_dataset: PathBuf,
        /// Output prefix; writes <out>.json and <out>.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded synthetic replay dataset.
    GenSynth {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of samples (alias for --synth-n).
        #[arg(long)]
        n: Option<usize>,
        /// Difficulty profile (alias for --synth-profile).
        #[arg(long)]
        profile: Option<String>,
        /// Dataset scale (alias for --synth-scale).
        #[arg(long)]
        scale: Option<String>,
        /// Where to write the dataset (line-delimited JSON).
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Calibrate { common, out } => {
            let config = RunConfig::resolve(&common, None)?;
            commands::calibrate::run(&config, &out)
        }
        Command::Run {
            common,
            calibration,
            out,
        } => {
            let config = RunConfig::resolve(&common, calibration.as_ref())?;
            commands::run::run(&config, &out)
        }
        Command::Eval {
            common,
            traces,
            out,
        } => {
            let config = RunConfig::resolve(&common, None)?;
            commands::eval::run(&config, &traces, &out)
        }
        Command::Ablate {
            common,
            val_dataset,
            out,
        } => {
            let config = RunConfig::resolve(&common, None)?;
            commands::ablate::run(&config, &val_dataset, &out)
        }
        Command::GenSynth {
            common,
            n,
            profile,
            scale,
            out,
        } => {
            let mut common = common;
            if n.is_some() {
                common.synth_n = n;
            }
            if profile.is_some() {
                common.synth_profile = profile;
            }
            if scale.is_some() {
                common.synth_scale = scale;
            }
            let config = RunConfig::resolve(&common, None)?;
            commands::gen_synth::run(&config, &out)
        }
    }
}
