//! HTTP backend clients.
//!
//! Three small contracts cover hosted models:
//!
//! * generator: OpenAI-compatible `POST /v1/completions` with `prompt`,
//!   `max_tokens`, `temperature`, `top_p`, `logit_bias`, `n`, `seed`;
//! * classifier: `POST /classify` with `{"text": "..."}` returning
//!   `{"score": 0.0..1.0}`;
//! * embedder: `POST /embed` with `{"text": "..."}` returning
//!   `{"vector": [..]}`.
//!
//! All clients bound their in-flight requests with a shared semaphore so a
//! fanned-out pipeline cannot flood the server.

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    check_generate_inputs, AttributeClassifier, BiasMap, Embedder, GenerationConfig, Generator,
    GeneratorCapabilities, NextTokenDistribution,
};
use crate::errors::{Error, Result};

/// Connection settings shared by the HTTP clients.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpClientConfig {
    /// Upper bound on concurrent requests per client.
    pub max_in_flight: usize,
    pub timeout_seconds: u64,
}

impl Default for HttpClientConfig {
    fn default() -> Self {
        Self {
            max_in_flight: 4,
            timeout_seconds: 30,
        }
    }
}

/// Counting semaphore; `acquire` blocks while the limit is saturated.
#[derive(Debug)]
struct InFlightLimiter {
    capacity: usize,
    state: Mutex<usize>,
    signal: Condvar,
}

impl InFlightLimiter {
    fn new(capacity: usize) -> Arc<Self> {
        Arc::new(Self {
            capacity: capacity.max(1),
            state: Mutex::new(0),
            signal: Condvar::new(),
        })
    }

    fn acquire(self: &Arc<Self>) -> InFlightGuard {
        let mut active = self.state.lock().unwrap();
        while *active >= self.capacity {
            active = self.signal.wait(active).unwrap();
        }
        *active += 1;
        InFlightGuard {
            limiter: Arc::clone(self),
        }
    }
}

struct InFlightGuard {
    limiter: Arc<InFlightLimiter>,
}

impl Drop for InFlightGuard {
    fn drop(&mut self) {
        let mut active = self.limiter.state.lock().unwrap();
        *active -= 1;
        self.limiter.signal.notify_one();
    }
}

fn build_agent(config: &HttpClientConfig) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(config.timeout_seconds)))
        .build()
        .into()
}

fn transport_error(url: &str, err: ureq::Error) -> Error {
    match err {
        ureq::Error::StatusCode(code) => Error::BadResponse {
            url: url.to_string(),
            detail: format!("HTTP status {code}"),
        },
        other => Error::BackendUnreachable {
            url: url.to_string(),
            detail: other.to_string(),
        },
    }
}

fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    agent: &ureq::Agent,
    limiter: &Arc<InFlightLimiter>,
    url: &str,
    body: &Req,
) -> Result<Resp> {
    let _slot = limiter.acquire();
    let mut response = agent
        .post(url)
        .send_json(body)
        .map_err(|e| transport_error(url, e))?;
    response
        .body_mut()
        .read_json::<Resp>()
        .map_err(|e| Error::BadResponse {
            url: url.to_string(),
            detail: e.to_string(),
        })
}

// ---------------------------------------------------------------------------
// Classifier client
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct TextRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

pub struct HttpClassifier {
    url: String,
    agent: ureq::Agent,
    limiter: Arc<InFlightLimiter>,
}

impl HttpClassifier {
    pub fn new(url: impl Into<String>, config: &HttpClientConfig) -> Self {
        Self {
            url: url.into(),
            agent: build_agent(config),
            limiter: InFlightLimiter::new(config.max_in_flight),
        }
    }
}

impl AttributeClassifier for HttpClassifier {
    fn classify(&self, input: &str) -> Result<f64> {
        let response: ScoreResponse = post_json(
            &self.agent,
            &self.limiter,
            &self.url,
            &TextRequest { text: input },
        )?;
        if !(0.0..=1.0).contains(&response.score) || !response.score.is_finite() {
            return Err(Error::BadResponse {
                url: self.url.clone(),
                detail: format!("score {} outside [0, 1]", response.score),
            });
        }
        Ok(response.score)
    }
}

// ---------------------------------------------------------------------------
// Embedder client
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct VectorResponse {
    vector: Vec<f64>,
}

pub struct HttpEmbedder {
    url: String,
    agent: ureq::Agent,
    limiter: Arc<InFlightLimiter>,
    expected_dimension: Option<usize>,
}

impl HttpEmbedder {
    pub fn new(url: impl Into<String>, config: &HttpClientConfig) -> Self {
        Self {
            url: url.into(),
            agent: build_agent(config),
            limiter: InFlightLimiter::new(config.max_in_flight),
            expected_dimension: None,
        }
    }

    /// Reject responses whose vector length differs from `dimension`.
    pub fn with_expected_dimension(mut self, dimension: usize) -> Self {
        self.expected_dimension = Some(dimension);
        self
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, input: &str) -> Result<Vec<f64>> {
        let response: VectorResponse = post_json(
            &self.agent,
            &self.limiter,
            &self.url,
            &TextRequest { text: input },
        )?;
        if let Some(expected) = self.expected_dimension {
            if response.vector.len() != expected {
                return Err(Error::BadResponse {
                    url: self.url.clone(),
                    detail: format!(
                        "embedding dimension {} does not match configured {expected}",
                        response.vector.len()
                    ),
                });
            }
        }
        Ok(response.vector)
    }
}

// ---------------------------------------------------------------------------
// Generator client (OpenAI-compatible completions)
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
    top_p: f64,
    n: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    logit_bias: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    text: String,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

/// Client for an OpenAI-compatible `/v1/completions` endpoint. Bias is passed
/// through the `logit_bias` request field; the wire contract exposes no raw
/// logits, so full distributions and sequence scoring are unsupported.
pub struct HttpGenerator {
    url: String,
    model: Option<String>,
    agent: ureq::Agent,
    limiter: Arc<InFlightLimiter>,
}

impl HttpGenerator {
    pub fn new(url: impl Into<String>, config: &HttpClientConfig) -> Self {
        Self {
            url: url.into(),
            model: None,
            agent: build_agent(config),
            limiter: InFlightLimiter::new(config.max_in_flight),
        }
    }

    /// Set the `model` request field, required by multi-model servers.
    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }
}

impl Generator for HttpGenerator {
    fn capabilities(&self) -> GeneratorCapabilities {
        GeneratorCapabilities {
            supports_logit_bias: true,
            supports_full_distribution: false,
            supports_sequence_scoring: false,
        }
    }

    fn generate(
        &self,
        prompt: &str,
        config: &GenerationConfig,
        bias: Option<&BiasMap>,
    ) -> Result<Vec<String>> {
        check_generate_inputs(prompt, config, bias, self.capabilities())?;
        let logit_bias: BTreeMap<String, f64> = bias
            .map(|b| {
                b.iter()
                    .map(|(id, value)| (id.to_string(), *value))
                    .collect()
            })
            .unwrap_or_default();
        let request = CompletionRequest {
            prompt,
            max_tokens: config.max_new_tokens,
            temperature: config.temperature,
            top_p: config.top_p,
            n: 1,
            seed: config.seed,
            model: self.model.as_deref(),
            logit_bias,
        };
        let response: CompletionResponse =
            post_json(&self.agent, &self.limiter, &self.url, &request)?;
        if response.choices.is_empty() {
            return Err(Error::BadResponse {
                url: self.url.clone(),
                detail: "completions response carried no choices".to_string(),
            });
        }
        Ok(response.choices.into_iter().map(|c| c.text).collect())
    }

    fn next_token_distribution(
        &self,
        _prefix: &str,
        _bias: Option<&BiasMap>,
    ) -> Result<NextTokenDistribution> {
        Err(Error::CapabilityMissing {
            capability: "full next-token distribution",
        })
    }

    fn score_sequence(&self, _prompt: &str, _completion: &str) -> Result<f64> {
        Err(Error::CapabilityMissing {
            capability: "sequence scoring",
        })
    }
}
