//! `cascade ablate`: run the component-removal variants on one dataset and
//! emit a comparison table.
//!
//! Variants: the full system; no cross-verification (stage-3 disagreement
//! resolves to the large model's answer); random routing (a seeded random
//! escalation set of the same size the thresholds would escalate); and the
//! alternative small-model estimators (ptd, ev), each with thresholds
//! recalibrated on the validation set under that estimator.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context};
use cascade_core::backends::replay::ReplayDataset;
use cascade_core::backends::synthetic::stream_rng;
use cascade_core::calibration::ThresholdPair;
use cascade_core::cascade::{Cascade, CascadeConfig, CvFallback, EscalationRule};
use cascade_core::metrics::{
    build_report, successful_traces, table_header, table_row, EvaluationReport,
};
use cascade_core::uncertainty::Estimator;
use rand::seq::index::sample as index_sample;

use crate::config::{BackendKind, RunConfig};
use crate::context::{
    build_backends, calibrate_dataset, describe_written, load_dataset, prompt_library,
    uniform_scale,
};

struct Variant {
    label: &'static str,
    thresholds: ThresholdPair,
    cross_verify_enabled: bool,
    escalation: EscalationRule,
}

pub fn run(config: &RunConfig, val_dataset: &Path, out: &Path) -> anyhow::Result<()> {
    println!("{}", config.header("ablate"));
    if config.backend == BackendKind::Remote {
        bail!("ablate runs against replay or synthetic backends only");
    }

    let (eval_ds, _) = load_dataset(config)?;
    let val_ds = ReplayDataset::load(val_dataset)
        .with_context(|| format!("loading validation dataset {}", val_dataset.display()))?;
    let scale = uniform_scale(&eval_ds)?;
    let prompts = prompt_library(config)?;

    let entropy_thresholds =
        calibrate_dataset(&val_ds, Estimator::Entropy, config.lambda, config.beta)?.thresholds();

    // Escalation budget of the uncertainty router, for the equal-budget
    // random-routing variant.
    let escalated: usize = eval_ds
        .records()
        .iter()
        .map(|r| {
            let u = r.small_output()?.uncertainty(Estimator::Entropy)?;
            Ok(usize::from(u.value > entropy_thresholds.tau1))
        })
        .sum::<cascade_core::Result<usize>>()?;
    let mut rng = stream_rng(config.seed, "ablate/random-routing");
    let random_ids: BTreeSet<String> = index_sample(&mut rng, eval_ds.len(), escalated)
        .into_iter()
        .map(|i| eval_ds.records()[i].id.clone())
        .collect();

    let mut variants = vec![
        Variant {
            label: "full",
            thresholds: entropy_thresholds,
            cross_verify_enabled: true,
            escalation: EscalationRule::Threshold,
        },
        Variant {
            label: "no_cross_verification",
            thresholds: entropy_thresholds,
            cross_verify_enabled: false,
            escalation: EscalationRule::Threshold,
        },
        Variant {
            label: "random_routing",
            thresholds: entropy_thresholds,
            cross_verify_enabled: true,
            escalation: EscalationRule::ForcedSet(Arc::new(random_ids)),
        },
    ];
    for estimator in [Estimator::Ptd, Estimator::Ev] {
        eval_ds.require_small_estimator(estimator)?;
        let thresholds =
            calibrate_dataset(&val_ds, estimator, config.lambda, config.beta)?.thresholds();
        variants.push(Variant {
            label: match estimator {
                Estimator::Ptd => "estimator_ptd",
                Estimator::Ev => "estimator_ev",
                Estimator::Entropy => unreachable!(),
            },
            thresholds,
            cross_verify_enabled: true,
            escalation: EscalationRule::Threshold,
        });
    }

    let samples = eval_ds.samples();
    let truths = eval_ds.truths();
    let options = crate::commands::eval::report_options(config);
    let mut rows: Vec<(String, EvaluationReport)> = Vec::new();
    println!("{}", table_header());
    for variant in variants {
        let (small, large) = build_backends(config, &eval_ds, &prompts)?;
        let cascade = Cascade {
            small: small.as_ref(),
            large: large.as_ref(),
            thresholds: variant.thresholds,
            prompts: &prompts,
            config: CascadeConfig {
                epsilon: config.epsilon,
                cv_fallback: CvFallback::WeightedAverage,
                cross_verify_enabled: variant.cross_verify_enabled,
                normalize_weights: config.normalize_weights,
                continue_on_error: config.continue_on_error,
                concurrency: config.concurrency,
                escalation: variant.escalation,
            },
        };
        let outcomes = cascade.run_batch(&samples)?;
        let traces = successful_traces(&outcomes);
        let report = build_report(&traces, &truths, &scale, &options)?;
        println!("{}", table_row(variant.label, &report));
        rows.push((variant.label.to_string(), report));
    }

    let json_path = out.with_extension("json");
    let table_path = out.with_extension("tsv");
    let labeled: Vec<serde_json::Value> = rows
        .iter()
        .map(|(label, report)| {
            serde_json::json!({ "variant": label, "report": report })
        })
        .collect();
    let mut file = std::fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut file, &labeled)?;
    file.write_all(b"\n")?;
    cascade_core::metrics::write_report_table(&table_path, &rows)?;
    describe_written(&json_path, "ablation reports");
    describe_written(&table_path, "ablation table");
    Ok(())
}
