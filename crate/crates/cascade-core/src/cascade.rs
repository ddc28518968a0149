//! The three-stage routing engine.
//!
//! Stage 1: the small model answers; accept when its uncertainty is at or
//! below tau1. Stage 2: escalate to the large model; accept when its
//! uncertainty is at or below tau2. Stage 3: if both are uncertain and the
//! predictions share a polarity, blend them by inverse uncertainty;
//! otherwise ask the large model to re-predict with an enhanced prompt that
//! embeds both prior answers (cross-verification).
//!
//! Both comparisons are inclusive: a sample sitting exactly on a threshold
//! takes the cheap branch.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::{Add, AddAssign};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backends::{ModelBackend, ModelOutput};
use crate::calibration::ThresholdPair;
use crate::domain::{polarity, SampleRecord, SentimentScore};
use crate::error::{Error, Result};
use crate::prompts::PromptLibrary;

/// Where a sample's cascade walk terminated.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    Stage1Fast,
    Stage2LargeAccepted,
    Stage3WeightedAvg,
    Stage3CrossVerify,
}

impl StageTag {
    pub fn all() -> [StageTag; 4] {
        [
            StageTag::Stage1Fast,
            StageTag::Stage2LargeAccepted,
            StageTag::Stage3WeightedAvg,
            StageTag::Stage3CrossVerify,
        ]
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StageTag::Stage1Fast => "stage1_fast",
            StageTag::Stage2LargeAccepted => "stage2_large_accepted",
            StageTag::Stage3WeightedAvg => "stage3_weighted_avg",
            StageTag::Stage3CrossVerify => "stage3_cross_verify",
        }
    }
}

/// Backend-call accounting for one sample or one run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostRecord {
    pub small_calls: u64,
    pub large_calls: u64,
    /// Cross-verification calls, counted separately from `large_calls`.
    pub large_cv_calls: u64,
    /// Seconds reported by the backends, summed over calls. Deterministic
    /// backends report stored or zero latencies, keeping trace files
    /// byte-reproducible.
    pub wall_time: f64,
}

impl Add for CostRecord {
    type Output = CostRecord;

    fn add(self, rhs: CostRecord) -> CostRecord {
        CostRecord {
            small_calls: self.small_calls + rhs.small_calls,
            large_calls: self.large_calls + rhs.large_calls,
            large_cv_calls: self.large_cv_calls + rhs.large_cv_calls,
            wall_time: self.wall_time + rhs.wall_time,
        }
    }
}

impl AddAssign for CostRecord {
    fn add_assign(&mut self, rhs: CostRecord) {
        *self = *self + rhs;
    }
}

/// Full per-sample decision record. Field order is stable so trace files
/// diff cleanly against goldens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub sample_id: String,
    pub y_s: f64,
    pub u_s: f64,
    pub y_l: Option<f64>,
    pub u_l: Option<f64>,
    pub outcome: StageTag,
    pub w_s: Option<f64>,
    /// Uncertainty of the cross-verification answer when the backend
    /// supplied one; recorded for analysis, never routed on.
    pub u_cv: Option<f64>,
    #[serde(rename = "final")]
    pub final_score: f64,
    pub cost: CostRecord,
}

/// A per-sample failure under `continue_on_error`, with whatever the
/// cascade had computed before the backend gave up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_id: String,
    pub error: String,
    pub y_s: Option<f64>,
    pub u_s: Option<f64>,
    pub cost: CostRecord,
}

/// One line of a trace file: a finished trace or a recorded failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchOutcome {
    Trace(CascadeTrace),
    Failure(SampleFailure),
}

impl BatchOutcome {
    pub fn trace(&self) -> Option<&CascadeTrace> {
        match self {
            BatchOutcome::Trace(t) => Some(t),
            BatchOutcome::Failure(_) => None,
        }
    }

    pub fn cost(&self) -> CostRecord {
        match self {
            BatchOutcome::Trace(t) => t.cost,
            BatchOutcome::Failure(f) => f.cost,
        }
    }
}

/// What to do when a cross-verification answer cannot be parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvFallback {
    /// Blend the two existing predictions instead (default).
    WeightedAverage,
    /// Propagate the parse error.
    Strict,
}

/// How stage 1 decides to escalate.
#[derive(Debug, Clone)]
pub enum EscalationRule {
    /// Escalate when u_s > tau1 (the normal rule).
    Threshold,
    /// Escalate exactly the listed sample ids, ignoring uncertainty. Used
    /// by the random-routing ablation; uncertainties are still computed and
    /// recorded.
    ForcedSet(Arc<BTreeSet<String>>),
}

#[derive(Debug, Clone)]
pub struct CascadeConfig {
    /// Epsilon in the inverse-uncertainty weights. Small enough to be inert
    /// at entropy scale, large enough to keep 1/u finite at u = 0.
    pub epsilon: f64,
    pub cv_fallback: CvFallback,
    /// When false, stage-3 disagreement resolves to the large model's
    /// answer without a cross-verification call (ablation mode).
    pub cross_verify_enabled: bool,
    /// Divide entropies by their maximum attainable value before weighting.
    /// Off by default: the raw-scale mismatch between a 3-class entropy and
    /// an n-way token entropy is part of the reference behavior.
    pub normalize_weights: bool,
    pub continue_on_error: bool,
    pub concurrency: usize,
    pub escalation: EscalationRule,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            cv_fallback: CvFallback::WeightedAverage,
            cross_verify_enabled: true,
            normalize_weights: false,
            continue_on_error: false,
            concurrency: 1,
            escalation: EscalationRule::Threshold,
        }
    }
}

/// Inverse-uncertainty blend of the two predictions.
///
/// Returns the blended score and the small model's weight. The result is a
/// convex combination: it always lies between `y_s` and `y_l`.
pub fn weighted_average(
    y_s: SentimentScore,
    u_s: f64,
    y_l: SentimentScore,
    u_l: f64,
    epsilon: f64,
) -> Result<(SentimentScore, f64)> {
    if !y_s.is_finite() || !y_l.is_finite() {
        return Err(Error::InvalidInput("predictions must be finite".into()));
    }
    if !u_s.is_finite() || !u_l.is_finite() || u_s < 0.0 || u_l < 0.0 {
        return Err(Error::InvalidInput(
            "uncertainties must be finite and non-negative".into(),
        ));
    }
    if epsilon <= 0.0 || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "epsilon must be a positive real, got {epsilon}"
        )));
    }
    let inv_s = 1.0 / (u_s + epsilon);
    let inv_l = 1.0 / (u_l + epsilon);
    let w_s = inv_s / (inv_s + inv_l);
    let blended = w_s * y_s.value() + (1.0 - w_s) * y_l.value();
    Ok((SentimentScore::new(blended), w_s))
}

/// The wired-up engine: two backends, thresholds, prompts, config.
pub struct Cascade<'a> {
    pub small: &'a dyn ModelBackend,
    pub large: &'a dyn ModelBackend,
    pub thresholds: ThresholdPair,
    pub prompts: &'a PromptLibrary,
    pub config: CascadeConfig,
}

impl Cascade<'_> {
    fn check_estimator_support(&self) -> Result<()> {
        let small_modes = &self.small.capabilities().uncertainty_modes;
        if !small_modes.contains(&self.thresholds.small_estimator) {
            return Err(Error::EstimatorMismatch {
                expected: self.thresholds.small_estimator.to_string(),
                found: format!(
                    "small backend '{}' supports [{}]",
                    self.small.name(),
                    small_modes
                        .iter()
                        .map(|m| m.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            });
        }
        let large_modes = &self.large.capabilities().uncertainty_modes;
        if !large_modes.contains(&self.thresholds.large_estimator) {
            return Err(Error::EstimatorMismatch {
                expected: self.thresholds.large_estimator.to_string(),
                found: format!(
                    "large backend '{}' supports [{}]",
                    self.large.name(),
                    large_modes
                        .iter()
                        .map(|m| m.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            });
        }
        Ok(())
    }

    /// Effective uncertainty for weighting: raw, or scaled by the entropy
    /// ceiling when normalization is on and the estimator is entropy-based.
    fn weight_input(&self, raw: f64, output: &ModelOutput, est: crate::uncertainty::Estimator) -> f64 {
        if !self.config.normalize_weights {
            return raw;
        }
        match output.entropy_ceiling(est) {
            Some(ceiling) if ceiling > 0.0 => raw / ceiling,
            _ => raw,
        }
    }

    /// Route one sample through the cascade.
    pub fn run_sample(&self, sample: &SampleRecord) -> std::result::Result<CascadeTrace, SampleFailure> {
        let mut cost = CostRecord::default();
        let fail = |error: Error, y_s: Option<f64>, u_s: Option<f64>, cost: CostRecord| {
            SampleFailure {
                sample_id: sample.id.clone(),
                error: error.to_string(),
                y_s,
                u_s,
                cost,
            }
        };

        if let Err(e) = self.check_estimator_support() {
            return Err(fail(e, None, None, cost));
        }

        // Stage 1: small model.
        let out_s = match self.small.predict(sample) {
            Ok(out) => out,
            Err(e) => return Err(fail(e, None, None, cost)),
        };
        cost.small_calls += 1;
        cost.wall_time += out_s.latency;
        if let Err(e) = out_s.validate_for_routing() {
            return Err(fail(e, Some(out_s.score.value()), None, cost));
        }
        let u_s = match out_s.uncertainty(self.thresholds.small_estimator) {
            Ok(u) => u,
            Err(e) => return Err(fail(e, Some(out_s.score.value()), None, cost)),
        };
        let y_s = out_s.score;

        let escalate = match &self.config.escalation {
            EscalationRule::Threshold => u_s.value > self.thresholds.tau1,
            EscalationRule::ForcedSet(ids) => ids.contains(&sample.id),
        };
        if !escalate {
            return Ok(CascadeTrace {
                sample_id: sample.id.clone(),
                y_s: y_s.value(),
                u_s: u_s.value,
                y_l: None,
                u_l: None,
                outcome: StageTag::Stage1Fast,
                w_s: None,
                u_cv: None,
                final_score: y_s.value(),
                cost,
            });
        }

        // Stage 2: large model.
        let out_l = match self.large.predict(sample) {
            Ok(out) => out,
            Err(e) => return Err(fail(e, Some(y_s.value()), Some(u_s.value), cost)),
        };
        cost.large_calls += 1;
        cost.wall_time += out_l.latency;
        if let Err(e) = out_l.validate_for_routing() {
            return Err(fail(e, Some(y_s.value()), Some(u_s.value), cost));
        }
        let u_l = match out_l.uncertainty(self.thresholds.large_estimator) {
            Ok(u) => u,
            Err(e) => return Err(fail(e, Some(y_s.value()), Some(u_s.value), cost)),
        };
        let y_l = out_l.score;

        let mut trace = CascadeTrace {
            sample_id: sample.id.clone(),
            y_s: y_s.value(),
            u_s: u_s.value,
            y_l: Some(y_l.value()),
            u_l: Some(u_l.value),
            outcome: StageTag::Stage2LargeAccepted,
            w_s: None,
            u_cv: None,
            final_score: y_l.value(),
            cost,
        };

        if u_l.value <= self.thresholds.tau2 {
            return Ok(trace);
        }

        // Stage 3: collaborative reasoning.
        let pol_s = match polarity(y_s) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, Some(y_s.value()), Some(u_s.value), trace.cost)),
        };
        let pol_l = match polarity(y_l) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, Some(y_s.value()), Some(u_s.value), trace.cost)),
        };

        let blend = |trace: &mut CascadeTrace| -> Result<()> {
            let us_eff = self.weight_input(u_s.value, &out_s, self.thresholds.small_estimator);
            let ul_eff = self.weight_input(u_l.value, &out_l, self.thresholds.large_estimator);
            let (blended, w_s) = weighted_average(y_s, us_eff, y_l, ul_eff, self.config.epsilon)?;
            trace.outcome = StageTag::Stage3WeightedAvg;
            trace.w_s = Some(w_s);
            trace.final_score = blended.value();
            Ok(())
        };

        if pol_s == pol_l {
            if let Err(e) = blend(&mut trace) {
                return Err(fail(e, Some(y_s.value()), Some(u_s.value), trace.cost));
            }
            return Ok(trace);
        }

        if !self.config.cross_verify_enabled {
            // Ablation mode: disagreement resolves to the large model's
            // answer, as if stage 2 had accepted it.
            return Ok(trace);
        }

        let prompt = match self.prompts.build_enhanced_prompt(
            sample,
            y_s.value(),
            u_s.value,
            y_l.value(),
            u_l.value,
        ) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, Some(y_s.value()), Some(u_s.value), trace.cost)),
        };

        let cv_result = self.large.cross_verify(sample, &prompt);
        trace.cost.large_cv_calls += 1;
        match cv_result {
            Ok(out_cv) => {
                trace.cost.wall_time += out_cv.latency;
                trace.outcome = StageTag::Stage3CrossVerify;
                trace.final_score = sample.scale.clamp(out_cv.score).value();
                trace.u_cv = out_cv
                    .uncertainty(self.thresholds.large_estimator)
                    .ok()
                    .map(|u| u.value);
                Ok(trace)
            }
            Err(Error::Parse(text)) => match self.config.cv_fallback {
                CvFallback::WeightedAverage => {
                    log::warn!(
                        "sample '{}': cross-verify answer unparseable, falling back to \
                         weighted average",
                        sample.id
                    );
                    if let Err(e) = blend(&mut trace) {
                        return Err(fail(e, Some(y_s.value()), Some(u_s.value), trace.cost));
                    }
                    Ok(trace)
                }
                CvFallback::Strict => Err(fail(
                    Error::Parse(text),
                    Some(y_s.value()),
                    Some(u_s.value),
                    trace.cost,
                )),
            },
            Err(e) => Err(fail(e, Some(y_s.value()), Some(u_s.value), trace.cost)),
        }
    }

    /// Route a batch, preserving input order. With `continue_on_error`,
    /// failures are recorded in place; otherwise the first failure (in
    /// input order) aborts.
    pub fn run_batch(&self, samples: &[SampleRecord]) -> Result<Vec<BatchOutcome>> {
        if samples.is_empty() {
            return Err(Error::InvalidCount);
        }
        self.check_estimator_support()?;

        let backend_cap = self
            .small
            .capabilities()
            .max_concurrency
            .min(self.large.capabilities().max_concurrency);
        let workers = self.config.concurrency.max(1).min(backend_cap).min(samples.len());

        let results: Vec<std::result::Result<CascadeTrace, SampleFailure>> = if workers <= 1 {
            samples.iter().map(|s| self.run_sample(s)).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
            pool.install(|| {
                use rayon::prelude::*;
                samples.par_iter().map(|s| self.run_sample(s)).collect()
            })
        };

        let mut outcomes = Vec::with_capacity(results.len());
        for result in results {
            match result {
                Ok(trace) => outcomes.push(BatchOutcome::Trace(trace)),
                Err(failure) => {
                    if self.config.continue_on_error {
                        outcomes.push(BatchOutcome::Failure(failure));
                    } else {
                        return Err(Error::Backend {
                            message: format!(
                                "sample '{}' failed: {}",
                                failure.sample_id, failure.error
                            ),
                            attempts: 1,
                            retryable: false,
                        });
                    }
                }
            }
        }
        Ok(outcomes)
    }
}

/// Write one JSON record per line, in batch order.
pub fn write_traces(path: &Path, outcomes: &[BatchOutcome]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = BufWriter::new(file);
    for outcome in outcomes {
        serde_json::to_writer(&mut writer, outcome)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Read a trace file produced by [`write_traces`].
pub fn read_traces(path: &Path) -> Result<Vec<BatchOutcome>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut outcomes = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome: BatchOutcome = serde_json::from_str(&line).map_err(|e| {
            Error::Schema(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        outcomes.push(outcome);
    }
    Ok(outcomes)
}
