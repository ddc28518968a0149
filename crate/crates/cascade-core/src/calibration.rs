//! Threshold calibration from validation-set uncertainty statistics.
//!
//! Validation samples are split by whether the predicted and true polarity
//! agree; a Gaussian is fitted to each group's uncertainties and the routing
//! threshold is a lambda-weighted blend of the two means plus a bias:
//!
//! ```text
//! tau = (1 - lambda) * mu_same + lambda * mu_opposite + beta
//! ```
//!
//! The same procedure runs once per model, giving `tau1` (small model) and
//! `tau2` (large model).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{polarity, SentimentScore};
use crate::error::{Error, Result};
use crate::uncertainty::{Estimator, UncertaintyScore};

/// One validation observation: model prediction, ground truth, uncertainty.
pub type ValidationRecord = (SentimentScore, SentimentScore, UncertaintyScore);

/// Uncertainties split by polarity agreement between prediction and truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedUncertainties {
    pub same: Vec<f64>,
    pub opposite: Vec<f64>,
    pub estimator: Estimator,
}

/// Mean / population standard deviation / count of one uncertainty group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub mu: f64,
    pub sigma: f64,
    pub n: usize,
}

/// Calibrated routing thresholds plus the hyperparameters that produced
/// them. The estimator tags ride along so a threshold calibrated under one
/// estimator cannot silently route uncertainties from another.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub tau1: f64,
    pub tau2: f64,
    pub lambda: f64,
    pub beta: f64,
    pub small_estimator: Estimator,
    pub large_estimator: Estimator,
}

/// Split validation records into polarity-agreeing and polarity-conflicting
/// groups.
///
/// A record joins `same` only on exact polarity equality, including 0 == 0;
/// neutral versus non-neutral counts as a conflict.
pub fn partition(records: &[ValidationRecord]) -> Result<PartitionedUncertainties> {
    let Some(first) = records.first() else {
        return Err(Error::EmptyValidationSet);
    };
    let estimator = first.2.estimator;
    let mut same = Vec::new();
    let mut opposite = Vec::new();
    for (pred, truth, u) in records {
        if u.estimator != estimator {
            return Err(Error::EstimatorMismatch {
                expected: estimator.to_string(),
                found: u.estimator.to_string(),
            });
        }
        if !u.value.is_finite() || u.value < 0.0 {
            return Err(Error::InvalidInput(format!(
                "uncertainty {} is negative or non-finite",
                u.value
            )));
        }
        if polarity(*pred)? == polarity(*truth)? {
            same.push(u.value);
        } else {
            opposite.push(u.value);
        }
    }
    Ok(PartitionedUncertainties {
        same,
        opposite,
        estimator,
    })
}

/// Gaussian maximum-likelihood fit: sample mean and population standard
/// deviation. Only the mean enters the threshold formula; sigma is kept for
/// distribution diagnostics.
pub fn gaussian_fit(values: &[f64]) -> Result<GaussianFit> {
    if values.is_empty() {
        return Err(Error::EmptyPartition("gaussian fit needs at least one value"));
    }
    let n = values.len();
    let mu = values.iter().sum::<f64>() / n as f64;
    let var = values
        .iter()
        .map(|v| {
            let d = v - mu;
            d * d
        })
        .sum::<f64>()
        / n as f64;
    Ok(GaussianFit {
        mu,
        sigma: var.sqrt(),
        n,
    })
}

/// Blend the two group means into a routing threshold.
pub fn compute_threshold(mu_same: f64, mu_opposite: f64, lambda: f64, beta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) || lambda.is_nan() {
        return Err(Error::InvalidHyperparameter(format!(
            "lambda must be in [0, 1], got {lambda}"
        )));
    }
    Ok((1.0 - lambda) * mu_same + lambda * mu_opposite + beta)
}

/// Fits for one model: both partitions plus the resulting threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelCalibration {
    pub estimator: Estimator,
    pub same: GaussianFit,
    pub opposite: GaussianFit,
    pub tau: f64,
}

/// Full calibration result for both models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOutcome {
    pub small: ModelCalibration,
    pub large: ModelCalibration,
    pub lambda: f64,
    pub beta: f64,
}

impl CalibrationOutcome {
    pub fn thresholds(&self) -> ThresholdPair {
        ThresholdPair {
            tau1: self.small.tau,
            tau2: self.large.tau,
            lambda: self.lambda,
            beta: self.beta,
            small_estimator: self.small.estimator,
            large_estimator: self.large.estimator,
        }
    }
}

fn calibrate_one(
    records: &[ValidationRecord],
    lambda: f64,
    beta: f64,
    which: &str,
) -> Result<ModelCalibration> {
    let parts = partition(records)?;
    if parts.same.is_empty() || parts.opposite.is_empty() {
        return Err(Error::DegeneratePartition(format!(
            "{which} model: same={} opposite={} — both groups need at least one \
             sample; widen the validation set instead of inventing a mean",
            parts.same.len(),
            parts.opposite.len()
        )));
    }
    let same = gaussian_fit(&parts.same)?;
    let opposite = gaussian_fit(&parts.opposite)?;
    Ok(ModelCalibration {
        estimator: parts.estimator,
        same,
        opposite,
        tau: compute_threshold(same.mu, opposite.mu, lambda, beta)?,
    })
}

/// Calibrate tau1 from the small model's validation records and tau2 from
/// the large model's, with shared (lambda, beta).
pub fn calibrate(
    small_records: &[ValidationRecord],
    large_records: &[ValidationRecord],
    lambda: f64,
    beta: f64,
) -> Result<CalibrationOutcome> {
    Ok(CalibrationOutcome {
        small: calibrate_one(small_records, lambda, beta, "small")?,
        large: calibrate_one(large_records, lambda, beta, "large")?,
        lambda,
        beta,
    })
}

/// Diagnostic split by coarse binary correctness: a prediction counts as
/// correct when `(pred < 0) == (truth < 0)`.
///
/// This mirrors the correct/incorrect distribution plots; it is *not* the
/// partition thresholds are calibrated on (see [`partition`]).
pub fn correctness_split(records: &[ValidationRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    if records.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for (pred, truth, u) in records {
        if !pred.is_finite() || !truth.is_finite() {
            return Err(Error::InvalidScore("non-finite score in diagnostic split".into()));
        }
        if (pred.value() < 0.0) == (truth.value() < 0.0) {
            correct.push(u.value);
        } else {
            incorrect.push(u.value);
        }
    }
    Ok((correct, incorrect))
}

// ---------------------------------------------------------------------------
// Calibration artifact file
// ---------------------------------------------------------------------------

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

/// Per-model section of the persisted calibration artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub estimator: Estimator,
    pub mu_same: f64,
    pub mu_opposite: f64,
    pub sigma_same: f64,
    pub sigma_opposite: f64,
    pub n_same: usize,
    pub n_opposite: usize,
    pub tau: f64,
}

impl From<&ModelCalibration> for ModelArtifact {
    fn from(c: &ModelCalibration) -> Self {
        Self {
            estimator: c.estimator,
            mu_same: c.same.mu,
            mu_opposite: c.opposite.mu,
            sigma_same: c.same.sigma,
            sigma_opposite: c.opposite.sigma,
            n_same: c.same.n,
            n_opposite: c.opposite.n,
            tau: c.tau,
        }
    }
}

/// The on-disk calibration document. Field names are part of the format
/// contract; bump `schema` on any change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub schema: u32,
    pub lambda: f64,
    pub beta: f64,
    /// Content hash of the validation file the thresholds came from.
    pub dataset_fingerprint: String,
    pub small: ModelArtifact,
    pub large: ModelArtifact,
}

impl CalibrationArtifact {
    pub fn from_outcome(outcome: &CalibrationOutcome, dataset_fingerprint: String) -> Self {
        Self {
            schema: ARTIFACT_SCHEMA_VERSION,
            lambda: outcome.lambda,
            beta: outcome.beta,
            dataset_fingerprint,
            small: ModelArtifact::from(&outcome.small),
            large: ModelArtifact::from(&outcome.large),
        }
    }

    pub fn thresholds(&self) -> ThresholdPair {
        ThresholdPair {
            tau1: self.small.tau,
            tau2: self.large.tau,
            lambda: self.lambda,
            beta: self.beta,
            small_estimator: self.small.estimator,
            large_estimator: self.large.estimator,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, self)?;
        file.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let artifact: Self = serde_json::from_str(&text)?;
        if artifact.schema != ARTIFACT_SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "calibration artifact schema {} unsupported (expected {})",
                artifact.schema, ARTIFACT_SCHEMA_VERSION
            )));
        }
        Ok(artifact)
    }

    /// True when `dataset` still matches the fingerprint recorded at
    /// calibration time.
    pub fn matches_dataset(&self, dataset: &Path) -> Result<bool> {
        Ok(self.dataset_fingerprint == fingerprint_file(dataset)?)
    }
}

/// Content hash of a file, as `sha256:<hex>`.
pub fn fingerprint_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(fingerprint_bytes(&bytes))
}

pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}
