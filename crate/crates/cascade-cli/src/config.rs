//! Run configuration with file/flag precedence.
//!
//! Precedence: CLI flag > config file > built-in default. Every command
//! prints the effective configuration it resolved, so runs are
//! reproducible from their logs.

use std::path::PathBuf;

use anyhow::{bail, Context};
use cascade_core::backends::synthetic::DifficultyProfile;
use cascade_core::metrics::Acc2Convention;
use cascade_core::uncertainty::Estimator;
use serde::{Deserialize, Serialize};

/// Which implementation serves model answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// Both models replayed from the dataset file.
    Replay,
    /// Both models generated from a seeded synthetic dataset.
    Synthetic,
    /// Small model replayed from the dataset file, large model served by a
    /// remote HTTP endpoint.
    Remote,
}

impl std::str::FromStr for BackendKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s {
            "replay" => Ok(Self::Replay),
            "synthetic" => Ok(Self::Synthetic),
            "remote" => Ok(Self::Remote),
            other => bail!("unknown backend '{other}' (expected replay|synthetic|remote)"),
        }
    }
}

/// Optional overrides loaded from a TOML config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub estimator: Option<String>,
    pub acc2_convention: Option<String>,
    pub backend: Option<String>,
    pub endpoint: Option<String>,
    pub concurrency: Option<usize>,
    pub continue_on_error: Option<bool>,
    pub normalize_weights: Option<bool>,
    pub seed: Option<u64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub templates: Option<PathBuf>,
    pub synth_n: Option<usize>,
    pub synth_profile: Option<String>,
    pub synth_scale: Option<String>,
    pub acc5_edges: Option<[f64; 4]>,
    pub acc3_band: Option<f64>,
}

impl FileConfig {
    pub fn load(path: &PathBuf) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config file {}", path.display()))
    }
}

/// Flags shared by every subcommand. `None` means "not set on the command
/// line", letting the config file and defaults fill in.
#[derive(Debug, Default, clap::Args)]
pub struct CommonArgs {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Replay dataset (line-delimited JSON).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Master seed for all randomness.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Threshold blend weight in [0, 1].
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Threshold bias.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Epsilon in the inverse-uncertainty weights.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Small-model uncertainty estimator: entropy|ptd|ev.
    #[arg(long)]
    pub estimator: Option<String>,
    /// Override the calibrated small-model threshold.
    #[arg(long)]
    pub tau1: Option<f64>,
    /// Override the calibrated large-model threshold.
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Backend: replay|synthetic|remote.
    #[arg(long)]
    pub backend: Option<String>,
    /// Remote endpoint URL (overrides the CASCADE_ENDPOINT variable).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Worker threads for batch execution.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Headline binary-metric convention: neg_pos_exclude_zero|neg_nonneg.
    #[arg(long)]
    pub acc2_convention: Option<String>,
    /// Record per-sample failures instead of aborting the batch.
    #[arg(long)]
    pub continue_on_error: bool,
    /// Divide entropies by their maximum before stage-3 weighting.
    #[arg(long)]
    pub normalize_weights: bool,
    /// Directory of prompt template overrides.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Synthetic-backend sample count.
    #[arg(long)]
    pub synth_n: Option<usize>,
    /// Synthetic difficulty profile: uniform|easy|hard|mixed|constant:<d>.
    #[arg(long)]
    pub synth_profile: Option<String>,
    /// Synthetic dataset scale: mosi|mosei|sims.
    #[arg(long)]
    pub synth_scale: Option<String>,
}

/// The fully resolved configuration a command runs with. Serialized into
/// the effective-config header.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub lambda: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub estimator: Estimator,
    pub acc2_convention: Acc2Convention,
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub concurrency: usize,
    pub continue_on_error: bool,
    pub normalize_weights: bool,
    pub seed: u64,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub templates: Option<PathBuf>,
    pub synth_n: usize,
    #[serde(with = "profile_as_string")]
    pub synth_profile: DifficultyProfile,
    pub synth_scale: String,
    pub acc5_edges: Option<[f64; 4]>,
    pub acc3_band: f64,
}

mod profile_as_string {
    use super::DifficultyProfile;
    use serde::Serializer;

    pub fn serialize<S: Serializer>(
        profile: &DifficultyProfile,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&profile.to_string())
    }
}

impl RunConfig {
    /// Merge defaults, config file, and flags, then validate.
    pub fn resolve(args: &CommonArgs, calibration_flag: Option<&PathBuf>) -> anyhow::Result<Self> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };

        let estimator_name = args
            .estimator
            .clone()
            .or(file.estimator)
            .unwrap_or_else(|| "entropy".into());
        let acc2_name = args
            .acc2_convention
            .clone()
            .or(file.acc2_convention)
            .unwrap_or_else(|| "neg_nonneg".into());
        let backend_name = args
            .backend
            .clone()
            .or(file.backend)
            .unwrap_or_else(|| "replay".into());
        let profile_name = args
            .synth_profile
            .clone()
            .or(file.synth_profile)
            .unwrap_or_else(|| "uniform".into());

        let config = Self {
            dataset: args.dataset.clone().or(file.dataset),
            calibration: calibration_flag.cloned().or(file.calibration),
            lambda: args.lambda.or(file.lambda).unwrap_or(0.5),
            beta: args.beta.or(file.beta).unwrap_or(0.0),
            epsilon: args.epsilon.or(file.epsilon).unwrap_or(1e-8),
            estimator: Estimator::from_str_name(&estimator_name)?,
            acc2_convention: acc2_name.parse()?,
            backend: backend_name.parse()?,
            endpoint: args
                .endpoint
                .clone()
                .or(file.endpoint)
                .or_else(|| std::env::var(cascade_core::backends::remote::ENDPOINT_ENV).ok()),
            concurrency: args.concurrency.or(file.concurrency).unwrap_or(1),
            continue_on_error: args.continue_on_error
                || file.continue_on_error.unwrap_or(false),
            normalize_weights: args.normalize_weights
                || file.normalize_weights.unwrap_or(false),
            seed: args.seed.or(file.seed).unwrap_or(0),
            tau1: args.tau1.or(file.tau1),
            tau2: args.tau2.or(file.tau2),
            templates: args.templates.clone().or(file.templates),
            synth_n: args.synth_n.or(file.synth_n).unwrap_or(1000),
            synth_profile: profile_name.parse::<DifficultyProfile>()?,
            synth_scale: args
                .synth_scale
                .clone()
                .or(file.synth_scale)
                .unwrap_or_else(|| "mosi".into()),
            acc5_edges: file.acc5_edges,
            acc3_band: file.acc3_band.unwrap_or(0.1),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> anyhow::Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            bail!("lambda must be in [0, 1], got {}", self.lambda);
        }
        if self.epsilon <= 0.0 || self.epsilon.is_nan() {
            bail!("epsilon must be positive, got {}", self.epsilon);
        }
        if self.concurrency < 1 {
            bail!("concurrency must be at least 1");
        }
        Ok(())
    }

    /// One-line JSON header describing the effective configuration.
    pub fn header(&self, command: &str) -> String {
        format!(
            "# config {command} {}",
            serde_json::to_string(self).expect("config serializes")
        )
    }
}
