//! Shared domain types: dataset scales, sentiment scores, polarity and
//! three-class discretization.
//!
//! Everything here is an immutable value object and every operation is a
//! pure function, so concurrent use needs no synchronization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The numeric range sentiment scores live on for one dataset family.
///
/// MOSI/MOSEI annotate on `[-3, +3]`, SIMS on `[-1, +1]`. Custom scales are
/// allowed as long as they contain zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetScale {
    pub name: String,
    pub min_score: f64,
    pub max_score: f64,
}

impl DatasetScale {
    pub fn new(name: impl Into<String>, min_score: f64, max_score: f64) -> Result<Self> {
        if !min_score.is_finite() || !max_score.is_finite() {
            return Err(Error::InvalidInput("scale bounds must be finite".into()));
        }
        if min_score >= max_score {
            return Err(Error::InvalidInput(format!(
                "scale min {min_score} must be below max {max_score}"
            )));
        }
        if min_score > 0.0 || max_score < 0.0 {
            return Err(Error::InvalidInput(
                "scale must contain zero so polarity is well defined".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            min_score,
            max_score,
        })
    }

    /// The `[-3, +3]` CMU-MOSI scale.
    pub fn mosi() -> Self {
        Self {
            name: "mosi".into(),
            min_score: -3.0,
            max_score: 3.0,
        }
    }

    /// The `[-3, +3]` CMU-MOSEI scale.
    pub fn mosei() -> Self {
        Self {
            name: "mosei".into(),
            min_score: -3.0,
            max_score: 3.0,
        }
    }

    /// The `[-1, +1]` CH-SIMS scale.
    pub fn sims() -> Self {
        Self {
            name: "sims".into(),
            min_score: -1.0,
            max_score: 1.0,
        }
    }

    /// Look up one of the built-in scales by name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mosi" => Ok(Self::mosi()),
            "mosei" => Ok(Self::mosei()),
            "sims" => Ok(Self::sims()),
            other => Err(Error::UnsupportedScale(other.to_string())),
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.min_score && value <= self.max_score
    }

    /// Clamp a raw score into this scale, logging when it was out of bounds.
    ///
    /// Free-text model answers can overshoot the annotation range; ingestion
    /// clamps with a warning instead of rejecting the record.
    pub fn clamp(&self, score: SentimentScore) -> SentimentScore {
        let v = score.value();
        if v.is_finite() && !self.contains(v) {
            let clamped = v.clamp(self.min_score, self.max_score);
            log::warn!(
                "score {v} outside scale '{}' [{}, {}]; clamped to {clamped}",
                self.name,
                self.min_score,
                self.max_score
            );
            return SentimentScore::new(clamped);
        }
        score
    }

    pub fn half_range(&self) -> f64 {
        (self.max_score - self.min_score) / 2.0
    }
}

/// A dimensionless continuous sentiment intensity.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SentimentScore(f64);

impl SentimentScore {
    /// Wrap a raw value. Finiteness is checked by the operations that need
    /// it, so replayed files round-trip unchanged.
    pub fn new(value: f64) -> Self {
        Self(value)
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}

impl From<f64> for SentimentScore {
    fn from(value: f64) -> Self {
        Self(value)
    }
}

/// Three-way sentiment class. The codes match the discretization rule:
/// Neutral = 0, Negative = 1, Positive = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentClass {
    Neutral,
    Negative,
    Positive,
}

impl SentimentClass {
    pub fn code(&self) -> u8 {
        match self {
            SentimentClass::Neutral => 0,
            SentimentClass::Negative => 1,
            SentimentClass::Positive => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(SentimentClass::Neutral),
            1 => Ok(SentimentClass::Negative),
            2 => Ok(SentimentClass::Positive),
            other => Err(Error::InvalidInput(format!(
                "sentiment class code must be 0, 1 or 2, got {other}"
            ))),
        }
    }
}

/// One evaluation unit: an utterance plus optional ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub text: String,
    pub ground_truth: Option<SentimentScore>,
    pub scale: DatasetScale,
}

impl SampleRecord {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        ground_truth: Option<SentimentScore>,
        scale: DatasetScale,
    ) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidInput("sample id must be non-empty".into()));
        }
        let ground_truth = ground_truth.map(|g| scale.clamp(g));
        Ok(Self {
            id,
            text: text.into(),
            ground_truth,
            scale,
        })
    }
}

/// Sign of a sentiment score: -1 negative, 0 neutral, +1 positive.
pub fn polarity(score: SentimentScore) -> Result<i8> {
    let v = score.value();
    if !v.is_finite() {
        return Err(Error::InvalidScore(format!("{v}")));
    }
    // Exact-zero comparison on purpose: replay files carry exact decimal
    // zeros, and the neutral branch is defined on exact zero. Callers that
    // need a tolerance band must pre-round.
    Ok(if v < 0.0 {
        -1
    } else if v > 0.0 {
        1
    } else {
        0
    })
}

/// Map a continuous score to its three-class polarity label.
pub fn discretize(score: SentimentScore) -> Result<SentimentClass> {
    Ok(match polarity(score)? {
        -1 => SentimentClass::Negative,
        1 => SentimentClass::Positive,
        _ => SentimentClass::Neutral,
    })
}
