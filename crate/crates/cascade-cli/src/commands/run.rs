//! `cascade run`: route a dataset through the cascade and write traces.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use cascade_core::cascade::{
    write_traces, Cascade, CascadeConfig, CvFallback, EscalationRule, StageTag,
};

use crate::config::RunConfig;
use crate::context::{
    build_backends, describe_written, load_dataset, prompt_library, resolve_thresholds,
};

pub fn run(config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    println!("{}", config.header("run"));

    // Threshold and estimator checks happen before any backend is built so
    // a mismatch can never trigger a model call.
    let thresholds = resolve_thresholds(config)?;
    let (dataset, fingerprint) = load_dataset(config)?;
    dataset.require_small_estimator(thresholds.small_estimator)?;
    println!("# dataset fingerprint {fingerprint}");

    let prompts = prompt_library(config)?;
    let (small, large) = build_backends(config, &dataset, &prompts)?;
    let cascade = Cascade {
        small: small.as_ref(),
        large: large.as_ref(),
        thresholds,
        prompts: &prompts,
        config: CascadeConfig {
            epsilon: config.epsilon,
            cv_fallback: CvFallback::WeightedAverage,
            cross_verify_enabled: true,
            normalize_weights: config.normalize_weights,
            continue_on_error: config.continue_on_error,
            concurrency: config.concurrency,
            escalation: EscalationRule::Threshold,
        },
    };

    let samples = dataset.samples();
    let started = Instant::now();
    let outcomes = cascade.run_batch(&samples)?;
    let elapsed = started.elapsed();
    write_traces(out, &outcomes)?;

    let mut counts: BTreeMap<StageTag, usize> =
        StageTag::all().into_iter().map(|t| (t, 0)).collect();
    let mut failures = 0usize;
    for outcome in &outcomes {
        match outcome.trace() {
            Some(trace) => *counts.entry(trace.outcome).or_insert(0) += 1,
            None => failures += 1,
        }
    }
    let stage_summary = counts
        .iter()
        .map(|(tag, n)| format!("{}={n}", tag.as_str()))
        .collect::<Vec<_>>()
        .join(" ");
    println!(
        "{} sample(s): {stage_summary} failures={failures} wall={:.3}s",
        outcomes.len(),
        elapsed.as_secs_f64()
    );
    describe_written(out, "traces");
    Ok(())
}
