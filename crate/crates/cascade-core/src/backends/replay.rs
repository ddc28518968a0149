//! Replay backend: serves precomputed model outputs from a line-delimited
//! JSON dataset.
//!
//! Replay files carry scores and probability distributions rather than raw
//! media, which makes the whole cascade testable at desk scale. One file
//! describes both models; [`ReplaySmallBackend`] and [`ReplayLargeBackend`]
//! are views over the same loaded dataset.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backends::{Capabilities, ModelBackend, ModelOutput};
use crate::domain::{DatasetScale, SampleRecord, SentimentScore};
use crate::error::{Error, Result};
use crate::uncertainty::{ClassDistribution, EnsembleOutputs, Estimator, TokenDistribution};

pub const REPLAY_SCHEMA_VERSION: u32 = 1;

/// One replay line. Field names and order are part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub schema: u32,
    pub id: String,
    pub text: String,
    pub scale: String,
    pub ground_truth: Option<f64>,
    pub small_score: f64,
    pub small_probs: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small_aux_ptd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub small_ensemble: Option<Vec<f64>>,
    pub large_score: f64,
    pub large_token_probs: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub large_cv_score: Option<f64>,
}

impl ReplayRecord {
    /// The small model's stored answer as a backend output.
    pub fn small_output(&self) -> Result<ModelOutput> {
        Ok(ModelOutput {
            score: SentimentScore::new(self.small_score),
            class_dist: Some(ClassDistribution::new(self.small_probs)?),
            token_dists: None,
            aux_ptd: self.small_aux_ptd,
            ensemble: self
                .small_ensemble
                .as_ref()
                .map(|ens| EnsembleOutputs::new(ens.iter().map(|&v| v.into()).collect()))
                .transpose()?,
            latency: 0.0,
        })
    }

    /// The large model's stored answer as a backend output.
    pub fn large_output(&self) -> Result<ModelOutput> {
        let token_dists = self
            .large_token_probs
            .iter()
            .map(|probs| TokenDistribution::new(probs.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ModelOutput {
            score: SentimentScore::new(self.large_score),
            class_dist: None,
            token_dists: Some(token_dists),
            aux_ptd: None,
            ensemble: None,
            latency: 0.0,
        })
    }
}

/// A loaded, validated replay dataset.
#[derive(Debug)]
pub struct ReplayDataset {
    records: Vec<ReplayRecord>,
    index: HashMap<String, usize>,
    scales: HashMap<String, DatasetScale>,
}

impl ReplayDataset {
    /// Validate records and build the id index. Out-of-scale scores are
    /// clamped here, at ingestion, with a logged warning.
    pub fn from_records(mut records: Vec<ReplayRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Schema("replay dataset has no records".into()));
        }
        let mut index = HashMap::new();
        let mut scales: HashMap<String, DatasetScale> = HashMap::new();
        for (i, record) in records.iter_mut().enumerate() {
            if record.schema != REPLAY_SCHEMA_VERSION {
                return Err(Error::Schema(format!(
                    "record {i}: schema {} unsupported (expected {REPLAY_SCHEMA_VERSION})",
                    record.schema
                )));
            }
            if record.id.is_empty() {
                return Err(Error::Schema(format!("record {i}: empty id")));
            }
            if index.insert(record.id.clone(), i).is_some() {
                return Err(Error::Schema(format!(
                    "record {i}: duplicate id '{}'",
                    record.id
                )));
            }
            let scale = match scales.get(&record.scale) {
                Some(s) => s.clone(),
                None => {
                    let s = DatasetScale::from_name(&record.scale)?;
                    scales.insert(record.scale.clone(), s.clone());
                    s
                }
            };

            // Distribution validity is checked once, at load.
            ClassDistribution::new(record.small_probs).map_err(|e| {
                Error::Schema(format!("record '{}': small_probs: {e}", record.id))
            })?;
            if record.large_token_probs.is_empty() {
                return Err(Error::Schema(format!(
                    "record '{}': large_token_probs must list at least one token",
                    record.id
                )));
            }
            for (t, probs) in record.large_token_probs.iter().enumerate() {
                TokenDistribution::new(probs.clone()).map_err(|e| {
                    Error::Schema(format!(
                        "record '{}': large_token_probs[{t}]: {e}",
                        record.id
                    ))
                })?;
            }
            if let Some(ens) = &record.small_ensemble {
                EnsembleOutputs::new(ens.iter().map(|&v| v.into()).collect()).map_err(|e| {
                    Error::Schema(format!("record '{}': small_ensemble: {e}", record.id))
                })?;
            }
            if let Some(aux) = record.small_aux_ptd {
                if aux < 0.0 || !aux.is_finite() {
                    return Err(Error::Schema(format!(
                        "record '{}': small_aux_ptd must be a non-negative real",
                        record.id
                    )));
                }
            }

            record.ground_truth = record
                .ground_truth
                .map(|g| scale.clamp(SentimentScore::new(g)).value());
            record.small_score = scale.clamp(SentimentScore::new(record.small_score)).value();
            record.large_score = scale.clamp(SentimentScore::new(record.large_score)).value();
            record.large_cv_score = record
                .large_cv_score
                .map(|v| scale.clamp(SentimentScore::new(v)).value());
        }
        Ok(Self {
            records,
            index,
            scales,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let reader = BufReader::new(file);
        let mut records = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ReplayRecord = serde_json::from_str(&line).map_err(|e| {
                Error::Schema(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            records.push(record);
        }
        Self::from_records(records)
    }

    pub fn save(path: &Path, records: &[ReplayRecord]) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut writer = BufWriter::new(file);
        for record in records {
            serde_json::to_writer(&mut writer, record)?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn records(&self) -> &[ReplayRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ReplayRecord> {
        self.index.get(id).map(|&i| &self.records[i])
    }

    pub fn scale_of(&self, record: &ReplayRecord) -> &DatasetScale {
        &self.scales[&record.scale]
    }

    /// The evaluation units this dataset describes, in file order.
    pub fn samples(&self) -> Vec<SampleRecord> {
        self.records
            .iter()
            .map(|r| SampleRecord {
                id: r.id.clone(),
                text: r.text.clone(),
                ground_truth: r.ground_truth.map(SentimentScore::new),
                scale: self.scale_of(r).clone(),
            })
            .collect()
    }

    /// Ground truths keyed by id, for evaluation joins.
    pub fn truths(&self) -> HashMap<String, f64> {
        self.records
            .iter()
            .filter_map(|r| r.ground_truth.map(|g| (r.id.clone(), g)))
            .collect()
    }

    /// Estimators every record can serve for the small model.
    pub fn small_estimators(&self) -> BTreeSet<Estimator> {
        let mut modes = BTreeSet::from([Estimator::Entropy]);
        if self.records.iter().all(|r| r.small_aux_ptd.is_some()) {
            modes.insert(Estimator::Ptd);
        }
        if self.records.iter().all(|r| r.small_ensemble.is_some()) {
            modes.insert(Estimator::Ev);
        }
        modes
    }

    /// Which record fields an estimator needs but this dataset lacks.
    pub fn missing_fields(&self, estimator: Estimator) -> Vec<&'static str> {
        match estimator {
            Estimator::Entropy => vec![],
            Estimator::Ptd => {
                if self.records.iter().all(|r| r.small_aux_ptd.is_some()) {
                    vec![]
                } else {
                    vec!["small_aux_ptd"]
                }
            }
            Estimator::Ev => {
                if self.records.iter().all(|r| r.small_ensemble.is_some()) {
                    vec![]
                } else {
                    vec!["small_ensemble"]
                }
            }
        }
    }

    /// Fail with a capability error naming the missing columns when the
    /// dataset cannot serve `estimator` for the small model.
    pub fn require_small_estimator(&self, estimator: Estimator) -> Result<()> {
        let missing = self.missing_fields(estimator);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::Capability(format!(
                "estimator '{estimator}' needs dataset fields not present on every \
                 record: {}",
                missing.join(", ")
            )))
        }
    }

    pub fn has_cross_verify(&self) -> bool {
        self.records.iter().any(|r| r.large_cv_score.is_some())
    }
}

/// Small-model view over a replay dataset.
#[derive(Debug, Clone)]
pub struct ReplaySmallBackend {
    data: Arc<ReplayDataset>,
    caps: Capabilities,
}

impl ReplaySmallBackend {
    pub fn new(data: Arc<ReplayDataset>) -> Self {
        let caps = Capabilities::new(false, data.small_estimators(), usize::MAX);
        Self { data, caps }
    }
}

impl ModelBackend for ReplaySmallBackend {
    fn name(&self) -> &str {
        "replay-small"
    }

    fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn predict(&self, sample: &SampleRecord) -> Result<ModelOutput> {
        self.data
            .get(&sample.id)
            .ok_or_else(|| Error::MissingRecord(sample.id.clone()))?
            .small_output()
    }
}

/// Large-model view over a replay dataset, including the cross-verify
/// column.
#[derive(Debug, Clone)]
pub struct ReplayLargeBackend {
    data: Arc<ReplayDataset>,
    caps: Capabilities,
}

impl ReplayLargeBackend {
    pub fn new(data: Arc<ReplayDataset>) -> Self {
        let caps = Capabilities::new(data.has_cross_verify(), [Estimator::Entropy], usize::MAX);
        Self { data, caps }
    }
}

impl ModelBackend for ReplayLargeBackend {
    fn name(&self) -> &str {
        "replay-large"
    }

    fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn predict(&self, sample: &SampleRecord) -> Result<ModelOutput> {
        self.data
            .get(&sample.id)
            .ok_or_else(|| Error::MissingRecord(sample.id.clone()))?
            .large_output()
    }

    fn cross_verify(&self, sample: &SampleRecord, _enhanced_prompt: &str) -> Result<ModelOutput> {
        let record = self
            .data
            .get(&sample.id)
            .ok_or_else(|| Error::MissingRecord(sample.id.clone()))?;
        let score = record.large_cv_score.ok_or_else(|| {
            Error::MissingRecord(format!(
                "sample '{}' has no large_cv_score column",
                sample.id
            ))
        })?;
        Ok(ModelOutput::score_only(SentimentScore::new(score), 0.0))
    }
}
