//! `cascade gen-synth`: write a seeded synthetic replay dataset.

use std::path::Path;

use cascade_core::backends::replay::ReplayDataset;
use cascade_core::backends::synthetic::generate;
use cascade_core::domain::DatasetScale;

use crate::config::RunConfig;
use crate::context::describe_written;

pub fn run(config: &RunConfig, out: &Path) -> anyhow::Result<()> {
    println!("{}", config.header("gen-synth"));
    let scale = DatasetScale::from_name(&config.synth_scale)?;
    let records = generate(config.synth_n, config.seed, config.synth_profile, &scale)?;
    ReplayDataset::save(out, &records)?;
    println!(
        "{} record(s) on scale '{}' with profile {} (seed {})",
        records.len(),
        scale.name,
        config.synth_profile,
        config.seed
    );
    describe_written(out, "synthetic dataset");
    Ok(())
}
