//! Remote model backend: a blocking HTTP client for a scoring service.
//!
//! Wire protocol: one endpoint, JSON request `{id, prompt, mode}` with mode
//! `base` or `cross_verify`, JSON response `{text, token_probs?,
//! latency_ms}`. Status codes: 200 answer, 422 answer-present-but-
//! unparseable hint, 503 overloaded (retried). Transient failures are
//! retried twice with exponential backoff; requests are idempotent because
//! prompts are deterministic.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::backends::{Capabilities, ModelBackend, ModelOutput};
use crate::domain::{SampleRecord, SentimentScore};
use crate::error::{Error, Result};
use crate::prompts::PromptLibrary;
use crate::uncertainty::{Estimator, TokenDistribution};

/// Environment variable holding the default endpoint URL; the CLI flag
/// overrides it.
pub const ENDPOINT_ENV: &str = "CASCADE_ENDPOINT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestMode {
    Base,
    CrossVerify,
}

/// Request body sent to the scoring service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub id: String,
    pub prompt: String,
    pub mode: RequestMode,
}

/// Response body from the scoring service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_probs: Option<Vec<Vec<f64>>>,
    pub latency_ms: f64,
}

/// Extract the first signed decimal number from a model answer.
///
/// Verbose models wrap the score in prose; position breaks ties.
pub fn parse_score(text: &str) -> Result<f64> {
    static NUMBER: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = NUMBER.get_or_init(|| {
        regex::Regex::new(r"[-+]?(?:\d+(?:\.\d+)?|\.\d+)").expect("static regex")
    });
    let m = re
        .find(text)
        .ok_or_else(|| Error::Parse(text.to_string()))?;
    m.as_str()
        .parse::<f64>()
        .map_err(|_| Error::Parse(text.to_string()))
}

/// Render a score the way the reference service phrases answers. The
/// round-trip `parse_score(render_answer(x)) == x` holds for four-decimal
/// scores.
pub fn render_answer(score: f64) -> String {
    format!("The sentiment score is {score:.4}.")
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub max_concurrency: usize,
    pub retries: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            max_concurrency: 4,
            retries: 2,
            backoff_base_ms: 50,
            timeout_ms: 30_000,
        }
    }
}

/// Counting semaphore; the backend never lets more than `max_concurrency`
/// requests be in flight regardless of how callers thread.
struct Semaphore {
    permits: Mutex<usize>,
    available: Condvar,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        SemaphoreGuard { semaphore: self }
    }
}

struct SemaphoreGuard<'a> {
    semaphore: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.semaphore.permits.lock().unwrap();
        *permits += 1;
        self.semaphore.available.notify_one();
    }
}

/// HTTP client backend. Builds base prompts itself; cross-verification
/// prompts arrive pre-built from the cascade.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    caps: Capabilities,
    prompts: PromptLibrary,
    semaphore: Semaphore,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig, prompts: PromptLibrary) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build();
        let caps = Capabilities::new(true, [Estimator::Entropy], config.max_concurrency);
        Self {
            semaphore: Semaphore::new(config.max_concurrency.max(1)),
            agent: ureq::Agent::new_with_config(agent_config),
            caps,
            prompts,
            config,
        }
    }

    fn send(&self, request: &WireRequest) -> Result<WireResponse> {
        let _permit = self.semaphore.acquire();
        let attempts = self.config.retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let backoff = self.config.backoff_base_ms << (attempt - 1);
                std::thread::sleep(Duration::from_millis(backoff));
            }
            match self.agent.post(&self.config.endpoint).send_json(request) {
                Ok(mut response) => {
                    let status = response.status().as_u16();
                    match status {
                        200 => {
                            let body: WireResponse =
                                response.body_mut().read_json().map_err(|e| {
                                    Error::Backend {
                                        message: format!("bad response body: {e}"),
                                        attempts: attempt + 1,
                                        retryable: false,
                                    }
                                })?;
                            return Ok(body);
                        }
                        // Parse-hint: the service saw the request but cannot
                        // produce a parseable answer. Not retryable.
                        422 => {
                            let text = response
                                .body_mut()
                                .read_to_string()
                                .unwrap_or_default();
                            return Err(Error::Parse(text));
                        }
                        // Overloaded: retry with backoff.
                        503 => {
                            last_error = "service overloaded (503)".to_string();
                            continue;
                        }
                        other => {
                            return Err(Error::Backend {
                                message: format!("unexpected status {other}"),
                                attempts: attempt + 1,
                                retryable: false,
                            });
                        }
                    }
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(Error::Backend {
            message: last_error,
            attempts,
            retryable: true,
        })
    }

    fn output_from(&self, sample: &SampleRecord, body: WireResponse) -> Result<ModelOutput> {
        let raw = parse_score(&body.text)?;
        let score = sample.scale.clamp(SentimentScore::new(raw));
        let token_dists = body
            .token_probs
            .map(|tokens| {
                tokens
                    .into_iter()
                    .map(TokenDistribution::new)
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        Ok(ModelOutput {
            score,
            class_dist: None,
            token_dists,
            aux_ptd: None,
            ensemble: None,
            latency: body.latency_ms / 1000.0,
        })
    }
}

impl ModelBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn predict(&self, sample: &SampleRecord) -> Result<ModelOutput> {
        let prompt = self.prompts.build_base_prompt(sample)?;
        let body = self.send(&WireRequest {
            id: sample.id.clone(),
            prompt,
            mode: RequestMode::Base,
        })?;
        self.output_from(sample, body)
    }

    fn cross_verify(&self, sample: &SampleRecord, enhanced_prompt: &str) -> Result<ModelOutput> {
        let body = self.send(&WireRequest {
            id: sample.id.clone(),
            prompt: enhanced_prompt.to_string(),
            mode: RequestMode::CrossVerify,
        })?;
        self.output_from(sample, body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_first_signed_number() {
        assert_eq!(parse_score("The sentiment score is -0.5.").unwrap(), -0.5);
        assert_eq!(parse_score("3").unwrap(), 3.0);
        assert_eq!(parse_score("score: +1.25 (confident)").unwrap(), 1.25);
        assert_eq!(parse_score("maybe .5 or so").unwrap(), 0.5);
        assert_eq!(parse_score("between -1 and 2, say -1").unwrap(), -1.0);
    }

    #[test]
    fn unparseable_text_is_a_parse_error() {
        assert!(matches!(
            parse_score("I cannot determine the sentiment."),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn render_parse_round_trip_on_grid() {
        for k in (-30000i64..=30000).step_by(977) {
            let x = k as f64 / 10000.0;
            assert_eq!(parse_score(&render_answer(x)).unwrap(), x);
        }
    }
}
