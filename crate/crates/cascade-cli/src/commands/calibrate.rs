//! `cascade calibrate`: compute routing thresholds from a validation set.

use std::path::Path;

use cascade_core::calibration::{correctness_split, gaussian_fit, CalibrationArtifact};

use crate::config::RunConfig;
use crate::context::{describe_written, load_dataset, validation_records};

pub fn run(config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    println!("{}", config.header("calibrate"));

    let (dataset, fingerprint) = load_dataset(config)?;
    let (small_records, large_records) = validation_records(&dataset, config.estimator)?;
    let outcome = cascade_core::calibration::calibrate(
        &small_records,
        &large_records,
        config.lambda,
        config.beta,
    )?;

    for (name, records, model) in [
        ("small", &small_records, &outcome.small),
        ("large", &large_records, &outcome.large),
    ] {
        println!(
            "{name}  estimator={}  same: mu={:.6} sigma={:.6} n={}  \
             opposite: mu={:.6} sigma={:.6} n={}  ->  tau={:.6}",
            model.estimator,
            model.same.mu,
            model.same.sigma,
            model.same.n,
            model.opposite.mu,
            model.opposite.sigma,
            model.opposite.n,
            model.tau,
        );
        // Diagnostic only: the correct/incorrect split under the coarse
        // binary rule, for distribution plots. Thresholds never use it.
        let (correct, incorrect) = correctness_split(records)?;
        if !correct.is_empty() && !incorrect.is_empty() {
            let c = gaussian_fit(&correct)?;
            let i = gaussian_fit(&incorrect)?;
            println!(
                "{name}  diagnostic correct/incorrect: correct mu={:.6} sigma={:.6} n={}  \
                 incorrect mu={:.6} sigma={:.6} n={}",
                c.mu, c.sigma, c.n, i.mu, i.sigma, i.n
            );
        }
    }

    let artifact = CalibrationArtifact::from_outcome(&outcome, fingerprint);
    artifact.save(out)?;
    describe_written(out, "calibration artifact");
    Ok(())
}
