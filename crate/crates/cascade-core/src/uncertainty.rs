//! Uncertainty estimators: map model outputs to a scalar uncertainty.
//!
//! Three estimators are supported: entropy of a class/token distribution,
//! an auxiliary prediction-truth-difference estimate, and ensemble variance.
//! Entropies are in nats throughout; this is fixed, not configurable, so
//! calibrated thresholds stay comparable across runs.

use serde::{Deserialize, Serialize};

use crate::domain::SentimentScore;
use crate::error::{Error, Result};

/// Additive constant inside the log that keeps `0 * log(0)` finite.
pub const LOG_EPSILON: f64 = 1e-12;

/// Which method produced an uncertainty value.
///
/// Scores from different estimators are never comparable; the tag makes
/// accidental cross-estimator threshold reuse a detectable error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Entropy of the predicted class (or token) distribution.
    Entropy,
    /// Auxiliary predictor's estimate of |prediction - truth|.
    Ptd,
    /// Population variance across an ensemble of predictors.
    Ev,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::Entropy => "entropy",
            Estimator::Ptd => "ptd",
            Estimator::Ev => "ev",
        }
    }

    pub fn from_str_name(s: &str) -> Result<Self> {
        match s {
            "entropy" => Ok(Estimator::Entropy),
            "ptd" => Ok(Estimator::Ptd),
            "ev" => Ok(Estimator::Ev),
            other => Err(Error::InvalidInput(format!("unknown estimator '{other}'"))),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A non-negative uncertainty value tagged with its estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyScore {
    pub value: f64,
    pub estimator: Estimator,
}

impl UncertaintyScore {
    pub fn new(value: f64, estimator: Estimator) -> Self {
        Self { value, estimator }
    }
}

/// A three-class probability distribution (neutral, negative, positive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassDistribution {
    probs: [f64; 3],
}

/// Tolerance on the probability sum; distributions come out of softmax
/// layers serialized at finite precision.
const SUM_TOLERANCE: f64 = 1e-6;

fn check_normalized(probs: &[f64]) -> Result<()> {
    for &p in probs {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::MalformedDistribution(format!(
                "probability {p} is negative or non-finite"
            )));
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::MalformedDistribution(format!(
            "probabilities sum to {sum}, expected 1 within {SUM_TOLERANCE}"
        )));
    }
    Ok(())
}

impl ClassDistribution {
    pub fn new(probs: [f64; 3]) -> Result<Self> {
        check_normalized(&probs)?;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64; 3] {
        &self.probs
    }

    pub fn uniform() -> Self {
        Self {
            probs: [1.0 / 3.0; 3],
        }
    }
}

/// A per-token probability distribution over n >= 2 vocabulary entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::MalformedDistribution(format!(
                "token distribution needs at least 2 entries, got {}",
                probs.len()
            )));
        }
        check_normalized(&probs)?;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn arity(&self) -> usize {
        self.probs.len()
    }
}

/// Predictions from m >= 2 independently trained predictors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnsembleOutputs {
    predictions: Vec<SentimentScore>,
}

impl EnsembleOutputs {
    pub fn new(predictions: Vec<SentimentScore>) -> Result<Self> {
        if predictions.len() < 2 {
            return Err(Error::InsufficientEnsemble(predictions.len()));
        }
        if let Some(bad) = predictions.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ensemble prediction {} is not finite",
                bad.value()
            )));
        }
        Ok(Self { predictions })
    }

    pub fn predictions(&self) -> &[SentimentScore] {
        &self.predictions
    }
}

fn entropy_nats(probs: &[f64]) -> f64 {
    let h: f64 = -probs.iter().map(|&p| p * (p + LOG_EPSILON).ln()).sum::<f64>();
    // The epsilon makes the p = 1 term slightly negative; entropy is >= 0.
    h.max(0.0)
}

/// Entropy of a three-class distribution, in nats. Bounded by ln 3.
pub fn class_entropy(dist: &ClassDistribution) -> UncertaintyScore {
    UncertaintyScore::new(entropy_nats(dist.probs()), Estimator::Entropy)
}

/// Mean per-token entropy over the label-related output tokens, in nats.
///
/// Which tokens count as label-related is the backend's call; this function
/// never guesses from text.
pub fn token_avg_entropy(tokens: &[TokenDistribution]) -> Result<UncertaintyScore> {
    if tokens.is_empty() {
        return Err(Error::NoLabelTokens);
    }
    // Shifted mean: exact when every token has the same entropy, which the
    // k-copies invariant requires.
    let first = entropy_nats(tokens[0].probs());
    let correction: f64 = tokens[1..]
        .iter()
        .map(|t| entropy_nats(t.probs()) - first)
        .sum();
    Ok(UncertaintyScore::new(
        first + correction / tokens.len() as f64,
        Estimator::Entropy,
    ))
}

/// Pass-through for an auxiliary predictor's |prediction - truth| estimate.
pub fn prediction_truth_difference(aux_estimate: f64) -> Result<UncertaintyScore> {
    if aux_estimate < 0.0 || !aux_estimate.is_finite() {
        return Err(Error::InvalidEstimate(aux_estimate));
    }
    Ok(UncertaintyScore::new(aux_estimate, Estimator::Ptd))
}

/// Population variance of the ensemble's predictions.
pub fn ensemble_variance(ens: &EnsembleOutputs) -> UncertaintyScore {
    let preds = ens.predictions();
    let n = preds.len() as f64;
    let mean = preds.iter().map(|p| p.value()).sum::<f64>() / n;
    let var = preds
        .iter()
        .map(|p| {
            let d = p.value() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    UncertaintyScore::new(var, Estimator::Ev)
}

/// Largest value the entropy of an n-way distribution can take, in nats.
pub fn max_entropy(arity: usize) -> f64 {
    (arity as f64).ln()
}
