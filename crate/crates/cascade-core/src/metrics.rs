//! Evaluation metrics and run-level reporting.
//!
//! Classification accuracies at several granularities, binary F1, MAE and
//! Pearson correlation, plus escalation/cost statistics aggregated from
//! cascade traces. Acc7 applies to [-3, 3] scales, Acc5/Acc3 to [-1, 1]
//! scales; both Acc2 conventions are always computed because the literature
//! uses both.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cascade::{BatchOutcome, CascadeTrace, CostRecord, StageTag};
use crate::domain::DatasetScale;
use crate::error::{Error, Result};

/// The two standard binary-accuracy conventions in sentiment regression
/// evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Acc2Convention {
    /// Drop ground-truth-neutral samples, compare signs. A prediction of
    /// exactly 0 counts as positive-side.
    #[serde(rename = "neg_pos_exclude_zero")]
    NegPosExcludeZero,
    /// Keep every sample, compare the (value < 0) indicator.
    #[serde(rename = "neg_nonneg")]
    NegNonNeg,
}

impl std::str::FromStr for Acc2Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg_pos_exclude_zero" => Ok(Self::NegPosExcludeZero),
            "neg_nonneg" => Ok(Self::NegNonNeg),
            other => Err(Error::InvalidInput(format!(
                "unknown acc2 convention '{other}' \
                 (expected neg_pos_exclude_zero|neg_nonneg)"
            ))),
        }
    }
}

impl std::fmt::Display for Acc2Convention {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NegPosExcludeZero => write!(f, "neg_pos_exclude_zero"),
            Self::NegNonNeg => write!(f, "neg_nonneg"),
        }
    }
}

fn check_lengths(preds: &[f64], truths: &[f64]) -> Result<()> {
    if preds.len() != truths.len() {
        return Err(Error::Shape {
            left: preds.len(),
            right: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::Shape { left: 0, right: 0 });
    }
    Ok(())
}

/// Seven-level accuracy on the [-3, 3] scale: clamp, round half away from
/// zero, compare.
pub fn acc7(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(preds, truths)?;
    let bucket = |v: f64| v.clamp(-3.0, 3.0).round() as i64;
    let hits = preds
        .iter()
        .zip(truths)
        .filter(|(p, t)| bucket(**p) == bucket(**t))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Five-bin edges for the [-1, 1] scale. The shipped defaults follow the
/// CH-SIMS convention:
/// `[-1, -0.7] (-0.7, -0.1] (-0.1, 0.1) [0.1, 0.7) [0.7, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acc5Bins {
    pub edges: [f64; 4],
}

impl Default for Acc5Bins {
    fn default() -> Self {
        Self {
            edges: [-0.7, -0.1, 0.1, 0.7],
        }
    }
}

impl Acc5Bins {
    /// Bin index of a value already clamped to the scale. Edge ownership:
    /// -0.7 and -0.1 close their left bins; 0.1 and 0.7 open their right
    /// bins (see the edge-case table in the format docs).
    pub fn classify(&self, v: f64) -> usize {
        let [e0, e1, e2, e3] = self.edges;
        if v <= e0 {
            0
        } else if v <= e1 {
            1
        } else if v < e2 {
            2
        } else if v < e3 {
            3
        } else {
            4
        }
    }
}

fn require_sims_like(scale: &DatasetScale) -> Result<()> {
    if scale.min_score != -1.0 || scale.max_score != 1.0 {
        return Err(Error::Scale(format!(
            "acc5/acc3 need a [-1, 1] scale, got '{}' [{}, {}]",
            scale.name, scale.min_score, scale.max_score
        )));
    }
    Ok(())
}

/// Five-class accuracy on the [-1, 1] scale.
pub fn acc5(preds: &[f64], truths: &[f64], scale: &DatasetScale, bins: &Acc5Bins) -> Result<f64> {
    check_lengths(preds, truths)?;
    require_sims_like(scale)?;
    let classify = |v: f64| bins.classify(v.clamp(scale.min_score, scale.max_score));
    let hits = preds
        .iter()
        .zip(truths)
        .filter(|(p, t)| classify(**p) == classify(**t))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Three-class accuracy on the [-1, 1] scale: negative below `-band`,
/// neutral inside `[-band, band]`, positive above.
pub fn acc3(preds: &[f64], truths: &[f64], scale: &DatasetScale, band: f64) -> Result<f64> {
    check_lengths(preds, truths)?;
    require_sims_like(scale)?;
    let classify = |v: f64| -> u8 {
        if v < -band {
            0
        } else if v <= band {
            1
        } else {
            2
        }
    };
    let hits = preds
        .iter()
        .zip(truths)
        .filter(|(p, t)| classify(**p) == classify(**t))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Binary labels under one Acc2 convention. Returns (pred_positive,
/// truth_positive) pairs; the exclude-zero convention drops truth == 0.
fn binary_pairs(
    preds: &[f64],
    truths: &[f64],
    convention: Acc2Convention,
) -> Result<Vec<(bool, bool)>> {
    check_lengths(preds, truths)?;
    let pairs: Vec<(bool, bool)> = match convention {
        Acc2Convention::NegPosExcludeZero => preds
            .iter()
            .zip(truths)
            .filter(|(_, t)| **t != 0.0)
            // pred == 0 is counted on the positive side.
            .map(|(p, t)| (*p >= 0.0, *t > 0.0))
            .collect(),
        Acc2Convention::NegNonNeg => preds
            .iter()
            .zip(truths)
            .map(|(p, t)| (*p >= 0.0, *t >= 0.0))
            .collect(),
    };
    if pairs.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    Ok(pairs)
}

/// Binary accuracy under the chosen convention.
pub fn acc2(preds: &[f64], truths: &[f64], convention: Acc2Convention) -> Result<f64> {
    let pairs = binary_pairs(preds, truths, convention)?;
    let hits = pairs.iter().filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pairs.len() as f64)
}

/// Weighted F1 over the two classes of the Acc2 labeling: per-class F1
/// averaged with class-support weights.
pub fn f1_binary(preds: &[f64], truths: &[f64], convention: Acc2Convention) -> Result<f64> {
    let pairs = binary_pairs(preds, truths, convention)?;
    let mut weighted = 0.0;
    for positive_class in [false, true] {
        let tp = pairs
            .iter()
            .filter(|(p, t)| *p == positive_class && *t == positive_class)
            .count() as f64;
        let fp = pairs
            .iter()
            .filter(|(p, t)| *p == positive_class && *t != positive_class)
            .count() as f64;
        let fn_ = pairs
            .iter()
            .filter(|(p, t)| *p != positive_class && *t == positive_class)
            .count() as f64;
        let support = tp + fn_;
        if support == 0.0 {
            continue;
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = tp / support;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        weighted += f1 * support / pairs.len() as f64;
    }
    Ok(weighted)
}

/// Mean absolute error.
pub fn mae(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(preds, truths)?;
    let sum: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum();
    Ok(sum / preds.len() as f64)
}

/// Sample Pearson correlation.
pub fn pearson(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(preds, truths)?;
    let n = preds.len() as f64;
    let mp = preds.iter().sum::<f64>() / n;
    let mt = truths.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vp = 0.0;
    let mut vt = 0.0;
    for (p, t) in preds.iter().zip(truths) {
        cov += (p - mp) * (t - mt);
        vp += (p - mp) * (p - mp);
        vt += (t - mt) * (t - mt);
    }
    if vp == 0.0 || vt == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok(cov / (vp.sqrt() * vt.sqrt()))
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Knobs for report building.
#[derive(Debug, Clone)]
pub struct ReportOptions {
    /// Which convention the headline `f1` column uses.
    pub headline_convention: Acc2Convention,
    pub acc5_bins: Acc5Bins,
    pub acc3_band: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            headline_convention: Acc2Convention::NegNonNeg,
            acc5_bins: Acc5Bins::default(),
            acc3_band: 0.1,
        }
    }
}

/// Metric bundle plus escalation and cost statistics for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema: u32,
    pub n: usize,
    /// Scale-dependent accuracies are null when the scale does not apply.
    pub acc7: Option<f64>,
    pub acc5: Option<f64>,
    pub acc3: Option<f64>,
    /// Null when every ground truth is zero.
    pub acc2_negpos: Option<f64>,
    pub acc2_negnonneg: f64,
    pub f1: f64,
    pub f1_convention: Acc2Convention,
    pub mae: f64,
    /// Null when either vector has zero variance.
    pub corr: Option<f64>,
    pub escalation_rate_stage2: f64,
    pub stage3_rate: f64,
    pub cv_rate: f64,
    pub per_stage_counts: BTreeMap<StageTag, usize>,
    pub total_cost: CostRecord,
}

/// Join traces with ground truths by sample id and compute every metric the
/// scale supports.
pub fn build_report(
    traces: &[CascadeTrace],
    truths: &HashMap<String, f64>,
    scale: &DatasetScale,
    options: &ReportOptions,
) -> Result<EvaluationReport> {
    if traces.is_empty() {
        return Err(Error::Join("no traces to evaluate".into()));
    }
    let mut preds = Vec::with_capacity(traces.len());
    let mut golds = Vec::with_capacity(traces.len());
    for trace in traces {
        let truth = truths.get(&trace.sample_id).ok_or_else(|| {
            Error::Join(format!(
                "trace sample '{}' has no ground truth in the dataset",
                trace.sample_id
            ))
        })?;
        preds.push(trace.final_score);
        golds.push(*truth);
    }

    let mosi_like = scale.min_score == -3.0 && scale.max_score == 3.0;
    let sims_like = scale.min_score == -1.0 && scale.max_score == 1.0;

    let acc7 = if mosi_like {
        Some(acc7(&preds, &golds)?)
    } else {
        None
    };
    let (acc5, acc3) = if sims_like {
        (
            Some(acc5(&preds, &golds, scale, &options.acc5_bins)?),
            Some(acc3(&preds, &golds, scale, options.acc3_band)?),
        )
    } else {
        (None, None)
    };
    let acc2_negpos = match acc2(&preds, &golds, Acc2Convention::NegPosExcludeZero) {
        Ok(v) => Some(v),
        Err(Error::EmptyEvaluationSet) => None,
        Err(e) => return Err(e),
    };
    let acc2_negnonneg = acc2(&preds, &golds, Acc2Convention::NegNonNeg)?;
    let f1 = match f1_binary(&preds, &golds, options.headline_convention) {
        Ok(v) => v,
        Err(Error::EmptyEvaluationSet) => 0.0,
        Err(e) => return Err(e),
    };
    let corr = match pearson(&preds, &golds) {
        Ok(v) => Some(v),
        Err(Error::UndefinedCorrelation) => None,
        Err(e) => return Err(e),
    };

    let mut per_stage_counts: BTreeMap<StageTag, usize> =
        StageTag::all().into_iter().map(|t| (t, 0)).collect();
    let mut total_cost = CostRecord::default();
    for trace in traces {
        *per_stage_counts.entry(trace.outcome).or_insert(0) += 1;
        total_cost += trace.cost;
    }
    let n = traces.len();
    let escalated = n - per_stage_counts[&StageTag::Stage1Fast];
    let stage3 = per_stage_counts[&StageTag::Stage3WeightedAvg]
        + per_stage_counts[&StageTag::Stage3CrossVerify];
    let cv = per_stage_counts[&StageTag::Stage3CrossVerify];

    Ok(EvaluationReport {
        schema: REPORT_SCHEMA_VERSION,
        n,
        acc7,
        acc5,
        acc3,
        acc2_negpos,
        acc2_negnonneg,
        f1,
        f1_convention: options.headline_convention,
        mae: mae(&preds, &golds)?,
        corr,
        escalation_rate_stage2: escalated as f64 / n as f64,
        stage3_rate: stage3 as f64 / n as f64,
        cv_rate: cv as f64 / n as f64,
        per_stage_counts,
        total_cost,
    })
}

/// Successful traces out of a batch; failures are skipped with a warning.
pub fn successful_traces(outcomes: &[BatchOutcome]) -> Vec<CascadeTrace> {
    let mut traces = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        match outcome {
            BatchOutcome::Trace(t) => traces.push(t.clone()),
            BatchOutcome::Failure(f) => {
                log::warn!("skipping failed sample '{}' in evaluation", f.sample_id);
            }
        }
    }
    traces
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6}"),
        None => "na".into(),
    }
}

/// Header for the flat one-row-per-run table.
pub fn table_header() -> String {
    [
        "label",
        "n",
        "acc7",
        "acc5",
        "acc3",
        "acc2_negpos",
        "acc2_negnonneg",
        "f1",
        "mae",
        "corr",
        "escalation_rate_stage2",
        "stage3_rate",
        "cv_rate",
        "small_calls",
        "large_calls",
        "large_cv_calls",
        "wall_time",
    ]
    .join("\t")
}

/// One tab-separated row for spreadsheet diffing.
pub fn table_row(label: &str, report: &EvaluationReport) -> String {
    format!(
        "{label}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\t{:.6}",
        report.n,
        fmt_opt(report.acc7),
        fmt_opt(report.acc5),
        fmt_opt(report.acc3),
        fmt_opt(report.acc2_negpos),
        report.acc2_negnonneg,
        report.f1,
        report.mae,
        fmt_opt(report.corr),
        report.escalation_rate_stage2,
        report.stage3_rate,
        report.cv_rate,
        report.total_cost.small_calls,
        report.total_cost.large_calls,
        report.total_cost.large_cv_calls,
        report.total_cost.wall_time,
    )
}

/// Write the report as pretty JSON.
pub fn write_report_json(path: &Path, report: &EvaluationReport) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, report)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Write labeled reports as a flat table.
pub fn write_report_table(path: &Path, rows: &[(String, EvaluationReport)]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "{}", table_header())?;
    for (label, report) in rows {
        writeln!(file, "{}", table_row(label, report))?;
    }
    Ok(())
}
