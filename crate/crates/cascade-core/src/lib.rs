//! Uncertainty-routed two-model inference cascade for sentiment regression.
//!
//! A cheap small model answers every sample first; only samples whose
//! predictive uncertainty exceeds a calibrated threshold escalate to an
//! expensive large model, and residual disagreement between the two is
//! resolved by inverse-uncertainty weighting or a cross-verification
//! re-prompt. The crate provides the domain types, uncertainty estimators,
//! threshold calibration, the routing engine, prompt construction, replay /
//! synthetic / remote backends, and evaluation metrics.

pub mod backends;
pub mod calibration;
pub mod cascade;
pub mod domain;
pub mod error;
pub mod metrics;
pub mod prompts;
pub mod uncertainty;

pub use error::{Error, Result};
