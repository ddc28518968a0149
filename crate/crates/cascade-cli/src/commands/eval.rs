//! `cascade eval`: score a trace file against its dataset's ground truths.

use std::path::Path;

use cascade_core::cascade::read_traces;
use cascade_core::metrics::{
    build_report, successful_traces, table_header, table_row, write_report_json,
    write_report_table, Acc5Bins, ReportOptions,
};

use crate::config::RunConfig;
use crate::context::{describe_written, load_dataset, uniform_scale};

pub fn report_options(config: &RunConfig) -> ReportOptions {
    ReportOptions {
        headline_convention: config.acc2_convention,
        acc5_bins: config
            .acc5_edges
            .map(|edges| Acc5Bins { edges })
            .unwrap_or_default(),
        acc3_band: config.acc3_band,
    }
}

pub fn run(config: &RunConfig, traces_path: &Path, out: &Path) -> anyhow::Result<()> {
    println!("{}", config.header("eval"));

    let outcomes = read_traces(traces_path)?;
    let traces = successful_traces(&outcomes);
    let (dataset, _) = load_dataset(config)?;
    let scale = uniform_scale(&dataset)?;
    let report = build_report(&traces, &dataset.truths(), &scale, &report_options(config))?;

    let json_path = out.with_extension("json");
    let table_path = out.with_extension("tsv");
    write_report_json(&json_path, &report)?;
    write_report_table(&table_path, &[("run".to_string(), report.clone())])?;

    println!("{}", table_header());
    println!("{}", table_row("run", &report));
    describe_written(&json_path, "report");
    describe_written(&table_path, "report table");
    Ok(())
}
