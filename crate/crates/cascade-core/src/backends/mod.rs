//! The pluggable model-backend boundary.
//!
//! A backend stands in for one model (the small baseline or the large MLLM)
//! and answers prediction requests with a score plus enough distributional
//! detail for at least one uncertainty estimator. Three implementations
//! ship: replay (precomputed outputs from a file), synthetic (seeded
//! generator), and a remote HTTP client. An in-process fake server backs the
//! remote client in tests.

pub mod fake_server;
pub mod remote;
pub mod replay;
pub mod synthetic;

use std::collections::BTreeSet;

use crate::domain::{SampleRecord, SentimentScore};
use crate::error::{Error, Result};
use crate::uncertainty::{
    class_entropy, ensemble_variance, max_entropy, prediction_truth_difference,
    token_avg_entropy, ClassDistribution, EnsembleOutputs, Estimator, TokenDistribution,
    UncertaintyScore,
};

/// One model answer: a score, whatever uncertainty inputs the model can
/// supply, and the time the call took.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub score: SentimentScore,
    pub class_dist: Option<ClassDistribution>,
    /// Per-token distributions for the label-related output tokens only;
    /// marking which tokens are label-related is the backend's job.
    pub token_dists: Option<Vec<TokenDistribution>>,
    pub aux_ptd: Option<f64>,
    pub ensemble: Option<EnsembleOutputs>,
    /// Seconds spent in the underlying model call. Deterministic backends
    /// report a stored or zero latency so runs stay byte-reproducible.
    pub latency: f64,
}

impl ModelOutput {
    pub fn score_only(score: SentimentScore, latency: f64) -> Self {
        Self {
            score,
            class_dist: None,
            token_dists: None,
            aux_ptd: None,
            ensemble: None,
            latency,
        }
    }

    /// Routing outputs must support at least one estimator. Cross-verify
    /// outputs are terminal and may be score-only.
    pub fn validate_for_routing(&self) -> Result<()> {
        if self.class_dist.is_none()
            && self.token_dists.is_none()
            && self.aux_ptd.is_none()
            && self.ensemble.is_none()
        {
            return Err(Error::Capability(
                "model output carries no uncertainty information".into(),
            ));
        }
        if self.latency < 0.0 || self.latency.is_nan() {
            return Err(Error::InvalidInput(format!(
                "latency must be non-negative, got {}",
                self.latency
            )));
        }
        Ok(())
    }

    /// Apply one uncertainty estimator to this output.
    pub fn uncertainty(&self, estimator: Estimator) -> Result<UncertaintyScore> {
        match estimator {
            Estimator::Entropy => {
                if let Some(dist) = &self.class_dist {
                    Ok(class_entropy(dist))
                } else if let Some(tokens) = &self.token_dists {
                    token_avg_entropy(tokens)
                } else {
                    Err(Error::Capability(
                        "entropy estimator needs class_dist or token_dists".into(),
                    ))
                }
            }
            Estimator::Ptd => match self.aux_ptd {
                Some(aux) => prediction_truth_difference(aux),
                None => Err(Error::Capability(
                    "ptd estimator needs the aux_ptd field".into(),
                )),
            },
            Estimator::Ev => match &self.ensemble {
                Some(ens) => Ok(ensemble_variance(ens)),
                None => Err(Error::Capability(
                    "ev estimator needs the ensemble field".into(),
                )),
            },
        }
    }

    /// Maximum attainable value for this output's entropy, used by the
    /// optional weight-normalization switch. `None` when the estimator is
    /// not entropy-based.
    pub fn entropy_ceiling(&self, estimator: Estimator) -> Option<f64> {
        if estimator != Estimator::Entropy {
            return None;
        }
        if self.class_dist.is_some() {
            return Some(max_entropy(3));
        }
        self.token_dists.as_ref().map(|tokens| {
            let sum: f64 = tokens.iter().map(|t| max_entropy(t.arity())).sum();
            sum / tokens.len() as f64
        })
    }
}

/// What a backend can do, declared up front.
#[derive(Debug, Clone, PartialEq)]
pub struct Capabilities {
    pub supports_cross_verify: bool,
    pub uncertainty_modes: BTreeSet<Estimator>,
    /// Largest number of in-flight calls the backend tolerates; the engine
    /// never exceeds it.
    pub max_concurrency: usize,
}

impl Capabilities {
    pub fn new(
        supports_cross_verify: bool,
        modes: impl IntoIterator<Item = Estimator>,
        max_concurrency: usize,
    ) -> Self {
        Self {
            supports_cross_verify,
            uncertainty_modes: modes.into_iter().collect(),
            max_concurrency: max_concurrency.max(1),
        }
    }
}

/// A model the cascade can call.
pub trait ModelBackend: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> &Capabilities;

    fn predict(&self, sample: &SampleRecord) -> Result<ModelOutput>;

    /// Second-pass prediction conditioned on the enhanced prompt. Only
    /// callable when `capabilities().supports_cross_verify`.
    fn cross_verify(&self, sample: &SampleRecord, enhanced_prompt: &str) -> Result<ModelOutput> {
        let _ = (sample, enhanced_prompt);
        Err(Error::Capability(format!(
            "backend '{}' does not support cross-verification",
            self.name()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_without_uncertainty_fails_routing_validation() {
        let out = ModelOutput::score_only(SentimentScore::new(0.5), 0.0);
        assert!(matches!(
            out.validate_for_routing(),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn uncertainty_prefers_class_dist_for_entropy() {
        let out = ModelOutput {
            score: SentimentScore::new(0.5),
            class_dist: Some(ClassDistribution::uniform()),
            token_dists: Some(vec![TokenDistribution::new(vec![1.0, 0.0]).unwrap()]),
            aux_ptd: None,
            ensemble: None,
            latency: 0.0,
        };
        let u = out.uncertainty(Estimator::Entropy).unwrap();
        assert!((u.value - 3f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn missing_fields_surface_as_capability_errors() {
        let out = ModelOutput {
            score: SentimentScore::new(0.5),
            class_dist: Some(ClassDistribution::uniform()),
            token_dists: None,
            aux_ptd: None,
            ensemble: None,
            latency: 0.0,
        };
        assert!(matches!(
            out.uncertainty(Estimator::Ptd),
            Err(Error::Capability(_))
        ));
        assert!(matches!(
            out.uncertainty(Estimator::Ev),
            Err(Error::Capability(_))
        ));
    }

    #[test]
    fn entropy_ceiling_reflects_arity() {
        let class_based = ModelOutput {
            score: SentimentScore::new(0.0),
            class_dist: Some(ClassDistribution::uniform()),
            token_dists: None,
            aux_ptd: None,
            ensemble: None,
            latency: 0.0,
        };
        assert_eq!(class_based.entropy_ceiling(Estimator::Entropy), Some(3f64.ln()));
        assert_eq!(class_based.entropy_ceiling(Estimator::Ptd), None);

        let token_based = ModelOutput {
            score: SentimentScore::new(0.0),
            class_dist: None,
            token_dists: Some(vec![
                TokenDistribution::new(vec![0.5, 0.5]).unwrap(),
                TokenDistribution::new(vec![0.25; 4]).unwrap(),
            ]),
            aux_ptd: None,
            ensemble: None,
            latency: 0.0,
        };
        let ceiling = token_based.entropy_ceiling(Estimator::Entropy).unwrap();
        assert!((ceiling - (2f64.ln() + 4f64.ln()) / 2.0).abs() < 1e-12);
    }
}
