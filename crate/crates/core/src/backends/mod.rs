//! Backend interfaces: text generation, next-token distributions, sequence
//! scoring, attribute classification, and embedding.
//!
//! Built-in implementations are deterministic and run offline (an n-gram
//! generator, a lexicon classifier, a hashed bag-of-words embedder); HTTP
//! clients cover the same traits for hosted models.

pub mod hashed;
pub mod http;
pub mod lexicon;
pub mod logits;
pub mod ngram;

pub use hashed::HashedEmbedder;
pub use http::{HttpClassifier, HttpClientConfig, HttpEmbedder, HttpGenerator};
pub use lexicon::{LexiconClassifier, LexiconClassifierSpec};
pub use ngram::NGramGenerator;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::errors::{Error, Result};

/// Vocabulary id within a generator backend.
pub type TokenId = u32;

/// Sparse additive logit adjustment, keyed by vocabulary id. Ordered so that
/// serialization and iteration are deterministic.
pub type BiasMap = BTreeMap<TokenId, f64>;

/// Sampling configuration for a generation call.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Upper bound on generated tokens per continuation.
    pub max_new_tokens: usize,
    /// Sample from the filtered distribution; greedy argmax when false.
    pub do_sample: bool,
    pub top_k: usize,
    pub top_p: f64,
    pub temperature: f64,
    /// Seed for the sampling RNG; identical inputs and seed reproduce the
    /// same output on built-in backends.
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 32,
            do_sample: true,
            top_k: 200,
            top_p: 0.9,
            temperature: 0.7,
            seed: 42,
        }
    }
}

impl GenerationConfig {
    /// Collect every constraint violation rather than stopping at the first.
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.max_new_tokens < 1 {
            errors.push("max_new_tokens must be >= 1".to_string());
        }
        if self.top_k < 1 {
            errors.push("top_k must be >= 1".to_string());
        }
        // NaN fails these comparisons and is rejected along with the rest.
        let top_p_valid = self.top_p > 0.0 && self.top_p <= 1.0;
        if !top_p_valid {
            errors.push("top_p must be in (0, 1]".to_string());
        }
        let temperature_valid = self.temperature > 0.0;
        if !temperature_valid {
            errors.push("temperature must be > 0".to_string());
        }
        errors
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.validation_errors();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(errors))
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Full next-token logit vector for a decoding state.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    /// Pre-softmax scores indexed by vocabulary id, including any bias that
    /// was supplied with the request.
    pub logits: Vec<f64>,
    pub vocab_size: usize,
}

impl NextTokenDistribution {
    /// Softmax of the stored logits; sums to 1 within 1e-9.
    pub fn probabilities(&self) -> Vec<f64> {
        logits::softmax(&self.logits)
    }
}

/// What a generator backend can do. Full-distribution access implies logit
/// bias support: a backend that hands out logits can always add to them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorCapabilities {
    pub supports_logit_bias: bool,
    pub supports_full_distribution: bool,
    pub supports_sequence_scoring: bool,
}

impl GeneratorCapabilities {
    pub fn is_coherent(&self) -> bool {
        !self.supports_full_distribution || self.supports_logit_bias
    }
}

/// Text generation backend.
pub trait Generator: Send + Sync {
    fn capabilities(&self) -> GeneratorCapabilities;

    /// Sample one or more continuations of `prompt`. When `bias` is present
    /// it is added to the logits at every decoding step.
    fn generate(
        &self,
        prompt: &str,
        config: &GenerationConfig,
        bias: Option<&BiasMap>,
    ) -> Result<Vec<String>>;

    /// Logits for the next token after `prefix`, with `bias` already added.
    /// Requires `supports_full_distribution`.
    fn next_token_distribution(
        &self,
        prefix: &str,
        bias: Option<&BiasMap>,
    ) -> Result<NextTokenDistribution>;

    /// Mean negative log-likelihood per `completion` token, conditioned on
    /// `prompt`, in nats. `exp` of the result is the conditional perplexity.
    /// Requires `supports_sequence_scoring`.
    fn score_sequence(&self, prompt: &str, completion: &str) -> Result<f64>;

    /// Vocabulary table (index = id) when the backend exposes one. Needed by
    /// decode loops that must turn sampled ids back into text.
    fn vocabulary(&self) -> Option<&[String]> {
        None
    }

    /// Id of the end-of-text marker, when the backend has one.
    fn end_of_text_id(&self) -> Option<TokenId> {
        None
    }
}

/// Attribute classifier: scores how consistently a text exhibits the target
/// attribute, in [0, 1]. Higher means more consistent.
pub trait AttributeClassifier: Send + Sync {
    fn classify(&self, text: &str) -> Result<f64>;
}

/// Sentence embedder. Non-empty text maps to a fixed-dimension vector.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Shared precondition checks for [`Generator::generate`].
pub(crate) fn check_generate_inputs(
    prompt: &str,
    config: &GenerationConfig,
    bias: Option<&BiasMap>,
    capabilities: GeneratorCapabilities,
) -> Result<()> {
    if prompt.is_empty() {
        return Err(Error::invalid_input("prompt must be non-empty"));
    }
    config.validate()?;
    if bias.is_some_and(|b| !b.is_empty()) && !capabilities.supports_logit_bias {
        return Err(Error::CapabilityMissing {
            capability: "logit bias",
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_matches_reference_settings() {
        let config = GenerationConfig::default();
        assert_eq!(config.max_new_tokens, 32);
        assert!(config.do_sample);
        assert_eq!(config.top_k, 200);
        assert_eq!(config.top_p, 0.9);
        assert_eq!(config.temperature, 0.7);
    }

    #[test]
    fn config_validation_collects_all_violations() {
        let config = GenerationConfig {
            max_new_tokens: 0,
            top_k: 0,
            top_p: 0.0,
            temperature: 0.0,
            ..GenerationConfig::default()
        };
        assert_eq!(config.validation_errors().len(), 4);
        assert!(config.validate().is_err());
    }

    #[test]
    fn zero_max_new_tokens_is_rejected_by_generate_checks() {
        let config = GenerationConfig {
            max_new_tokens: 0,
            ..Default::default()
        };
        let caps = GeneratorCapabilities {
            supports_logit_bias: true,
            supports_full_distribution: true,
            supports_sequence_scoring: true,
        };
        let err = check_generate_inputs("prompt", &config, None, caps).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn bias_without_capability_is_rejected() {
        let caps = GeneratorCapabilities {
            supports_logit_bias: false,
            supports_full_distribution: false,
            supports_sequence_scoring: false,
        };
        let mut bias = BiasMap::new();
        bias.insert(3, 1.0);
        let err = check_generate_inputs("p", &GenerationConfig::default(), Some(&bias), caps)
            .unwrap_err();
        assert!(matches!(err, Error::CapabilityMissing { .. }));
    }

    #[test]
    fn capability_coherence() {
        let caps = GeneratorCapabilities {
            supports_logit_bias: false,
            supports_full_distribution: true,
            supports_sequence_scoring: false,
        };
        assert!(!caps.is_coherent());
    }
}
