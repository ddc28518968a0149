//! Shared plumbing for the subcommands: dataset loading, backend
//! construction, threshold resolution.

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use cascade_core::backends::remote::{RemoteBackend, RemoteConfig};
use cascade_core::backends::replay::{ReplayDataset, ReplayLargeBackend, ReplaySmallBackend};
use cascade_core::backends::{synthetic, ModelBackend};
use cascade_core::calibration::{
    calibrate, fingerprint_bytes, fingerprint_file, CalibrationArtifact, CalibrationOutcome,
    ThresholdPair, ValidationRecord,
};
use cascade_core::domain::{DatasetScale, SentimentScore};
use cascade_core::prompts::PromptLibrary;
use cascade_core::uncertainty::Estimator;

use crate::config::{BackendKind, RunConfig};

/// Load the replay dataset named by the config, or generate the synthetic
/// one. Returns the dataset and its content fingerprint.
pub fn load_dataset(config: &RunConfig) -> anyhow::Result<(Arc<ReplayDataset>, String)> {
    match config.backend {
        BackendKind::Synthetic => {
            let scale = DatasetScale::from_name(&config.synth_scale)?;
            let records = synthetic::generate(
                config.synth_n,
                config.seed,
                config.synth_profile,
                &scale,
            )?;
            let serialized = serde_json::to_vec(&records)?;
            let fingerprint = fingerprint_bytes(&serialized);
            Ok((Arc::new(ReplayDataset::from_records(records)?), fingerprint))
        }
        BackendKind::Replay | BackendKind::Remote => {
            let path = config
                .dataset
                .as_ref()
                .ok_or_else(|| anyhow::anyhow!("--dataset is required for this backend"))?;
            let fingerprint = fingerprint_file(path)
                .with_context(|| format!("reading dataset {}", path.display()))?;
            let dataset = ReplayDataset::load(path)
                .with_context(|| format!("loading dataset {}", path.display()))?;
            Ok((Arc::new(dataset), fingerprint))
        }
    }
}

/// The dataset's single scale; mixed-scale files are rejected where one
/// scale is needed (metrics, prompts defaults).
pub fn uniform_scale(dataset: &ReplayDataset) -> anyhow::Result<DatasetScale> {
    let first = &dataset.records()[0];
    let scale = dataset.scale_of(first).clone();
    if dataset.records().iter().any(|r| r.scale != first.scale) {
        bail!("dataset mixes scales; this command needs a single scale");
    }
    Ok(scale)
}

pub fn prompt_library(config: &RunConfig) -> anyhow::Result<PromptLibrary> {
    let mut library = PromptLibrary::builtin();
    if let Some(dir) = &config.templates {
        library = library
            .with_dir(dir)
            .with_context(|| format!("loading templates from {}", dir.display()))?;
    }
    Ok(library)
}

/// Per-record validation tuples (prediction, truth, uncertainty) for both
/// models. Records without ground truth cannot be calibrated on.
pub fn validation_records(
    dataset: &ReplayDataset,
    small_estimator: Estimator,
) -> anyhow::Result<(Vec<ValidationRecord>, Vec<ValidationRecord>)> {
    dataset.require_small_estimator(small_estimator)?;
    let mut small = Vec::with_capacity(dataset.len());
    let mut large = Vec::with_capacity(dataset.len());
    let mut skipped = 0usize;
    for record in dataset.records() {
        let Some(truth) = record.ground_truth else {
            skipped += 1;
            continue;
        };
        let truth = SentimentScore::new(truth);
        let u_small = record.small_output()?.uncertainty(small_estimator)?;
        let u_large = record.large_output()?.uncertainty(Estimator::Entropy)?;
        small.push((SentimentScore::new(record.small_score), truth, u_small));
        large.push((SentimentScore::new(record.large_score), truth, u_large));
    }
    if skipped > 0 {
        log::warn!("{skipped} record(s) without ground truth skipped for calibration");
    }
    if small.is_empty() {
        bail!("no records with ground truth; cannot calibrate");
    }
    Ok((small, large))
}

/// Calibrate thresholds from a validation dataset with the given small
/// estimator (the large model always uses token entropy).
pub fn calibrate_dataset(
    dataset: &ReplayDataset,
    small_estimator: Estimator,
    lambda: f64,
    beta: f64,
) -> anyhow::Result<CalibrationOutcome> {
    let (small, large) = validation_records(dataset, small_estimator)?;
    Ok(calibrate(&small, &large, lambda, beta)?)
}

/// Thresholds from explicit overrides or the calibration artifact. The
/// artifact's estimator tag must match the configured estimator; mismatch
/// aborts before any backend call.
pub fn resolve_thresholds(config: &RunConfig) -> anyhow::Result<ThresholdPair> {
    if let (Some(tau1), Some(tau2)) = (config.tau1, config.tau2) {
        return Ok(ThresholdPair {
            tau1,
            tau2,
            lambda: config.lambda,
            beta: config.beta,
            small_estimator: config.estimator,
            large_estimator: Estimator::Entropy,
        });
    }
    let path = config.calibration.as_ref().ok_or_else(|| {
        anyhow::anyhow!(
            "either --calibration or both --tau1/--tau2 overrides are required"
        )
    })?;
    let artifact = CalibrationArtifact::load(path)
        .with_context(|| format!("loading calibration artifact {}", path.display()))?;
    println!(
        "# calibration {} (estimators {}/{}, lambda {}, beta {}, validation {})",
        path.display(),
        artifact.small.estimator,
        artifact.large.estimator,
        artifact.lambda,
        artifact.beta,
        artifact.dataset_fingerprint
    );
    if artifact.small.estimator != config.estimator {
        return Err(cascade_core::Error::EstimatorMismatch {
            expected: config.estimator.to_string(),
            found: format!(
                "calibration artifact was computed with '{}'",
                artifact.small.estimator
            ),
        }
        .into());
    }
    let mut thresholds = artifact.thresholds();
    if let Some(tau1) = config.tau1 {
        thresholds.tau1 = tau1;
    }
    if let Some(tau2) = config.tau2 {
        thresholds.tau2 = tau2;
    }
    Ok(thresholds)
}

/// The two model backends for this run.
pub fn build_backends(
    config: &RunConfig,
    dataset: &Arc<ReplayDataset>,
    prompts: &PromptLibrary,
) -> anyhow::Result<(Box<dyn ModelBackend>, Box<dyn ModelBackend>)> {
    let small: Box<dyn ModelBackend> = Box::new(ReplaySmallBackend::new(Arc::clone(dataset)));
    let large: Box<dyn ModelBackend> = match config.backend {
        BackendKind::Replay | BackendKind::Synthetic => {
            Box::new(ReplayLargeBackend::new(Arc::clone(dataset)))
        }
        BackendKind::Remote => {
            let endpoint = config.endpoint.clone().ok_or_else(|| {
                anyhow::anyhow!(
                    "remote backend needs an endpoint (--endpoint or {})",
                    cascade_core::backends::remote::ENDPOINT_ENV
                )
            })?;
            let mut remote_config = RemoteConfig::new(endpoint);
            remote_config.max_concurrency = config.concurrency;
            Box::new(RemoteBackend::new(remote_config, prompts.clone()))
        }
    };
    Ok((small, large))
}

/// Write a file only through a closure result, with path context on errors.
pub fn describe_written(path: &Path, what: &str) {
    println!("wrote {what} to {}", path.display());
}
