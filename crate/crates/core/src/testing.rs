//! Test doubles shared by unit and integration tests: fault-injection
//! generators, call-counting wrappers, and fixed-value scorers.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::backends::{
    AttributeClassifier, BiasMap, GenerationConfig, Generator, GeneratorCapabilities,
    NextTokenDistribution,
};
use crate::errors::{Error, Result};

/// Generator that fails or returns empty strings on a seed-dependent
/// schedule, for exercising retry budgets.
pub struct FlakyGenerator {
    mode: FlakyMode,
}

enum FlakyMode {
    AlwaysEmpty,
    EmptyOnEvenSeeds,
    AlwaysError,
}

impl FlakyGenerator {
    pub fn always_empty() -> Self {
        Self {
            mode: FlakyMode::AlwaysEmpty,
        }
    }

    pub fn empty_on_even_seeds() -> Self {
        Self {
            mode: FlakyMode::EmptyOnEvenSeeds,
        }
    }

    pub fn always_error() -> Self {
        Self {
            mode: FlakyMode::AlwaysError,
        }
    }
}

impl Generator for FlakyGenerator {
    fn capabilities(&self) -> GeneratorCapabilities {
        GeneratorCapabilities {
            supports_logit_bias: false,
            supports_full_distribution: false,
            supports_sequence_scoring: false,
        }
    }

    fn generate(
        &self,
        _prompt: &str,
        config: &GenerationConfig,
        _bias: Option<&BiasMap>,
    ) -> Result<Vec<String>> {
        match self.mode {
            FlakyMode::AlwaysEmpty => Ok(vec![String::new()]),
            FlakyMode::EmptyOnEvenSeeds => {
                if config.seed.is_multiple_of(2) {
                    Ok(vec![String::new()])
                } else {
                    Ok(vec![format!("sample for seed {}", config.seed)])
                }
            }
            FlakyMode::AlwaysError => Err(Error::GenerationFailed(
                "injected generator fault".to_string(),
            )),
        }
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

/// Classifier wrapper that counts invocations; lets tests assert that a
/// method never consulted the classifier.
pub struct CountingClassifier<C: AttributeClassifier> {
    inner: C,
    calls: AtomicUsize,
}

impl<C: AttributeClassifier> CountingClassifier<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<C: AttributeClassifier> AttributeClassifier for CountingClassifier<C> {
    fn classify(&self, input: &str) -> Result<f64> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.classify(input)
    }
}

/// Classifier that returns one fixed score for every input.
pub struct ConstantClassifier(pub f64);

impl AttributeClassifier for ConstantClassifier {
    fn classify(&self, _input: &str) -> Result<f64> {
        Ok(self.0)
    }
}

/// Classifier that always fails, for error-path tests.
pub struct FailingClassifier;

impl AttributeClassifier for FailingClassifier {
    fn classify(&self, _input: &str) -> Result<f64> {
        Err(Error::BackendUnreachable {
            url: "test://classifier".to_string(),
            detail: "injected classifier fault".to_string(),
        })
    }
}

/// Sequence scorer with a fixed per-token negative log-likelihood. A value
/// of 0 models a scorer that is certain of every token.
pub struct FixedNllScorer(pub f64);

impl Generator for FixedNllScorer {
    fn capabilities(&self) -> GeneratorCapabilities {
        GeneratorCapabilities {
            supports_logit_bias: false,
            supports_full_distribution: false,
            supports_sequence_scoring: true,
        }
    }

    fn generate(
        &self,
        _prompt: &str,
        _config: &GenerationConfig,
        _bias: Option<&BiasMap>,
    ) -> Result<Vec<String>> {
        Err(Error::CapabilityMissing {
            capability: "generation",
        })
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

    fn score_sequence(&self, _prompt: &str, completion: &str) -> Result<f64> {
        if completion.is_empty() {
            return Err(Error::invalid_input("completion must be non-empty"));
        }
        Ok(self.0)
    }
}
