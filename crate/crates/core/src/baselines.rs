//! Reference generation methods: plain continuation, prompt injection, and
//! the step-wise FUDGE and PREADD decoders.
//!
//! FUDGE rescales the top candidate tokens by classifier log-scores at each
//! step and samples from the renormalized candidate set. PREADD contrasts
//! the logits of the prefixed and unprefixed context and then runs the same
//! temperature/top-k/top-p chain as plain sampling, so zero contrast
//! strength reproduces the continuation distribution exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backends::logits;
use crate::backends::{
    AttributeClassifier, GenerationConfig, Generator, NextTokenDistribution, TokenId,
};
use crate::errors::{Error, Result};

/// Floor for classifier scores inside FUDGE's log, preventing `-inf` logits.
pub const FUDGE_SCORE_FLOOR: f64 = 1e-6;

/// Baseline settings, embedded in the pipeline config.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BaselineSpec {
    /// Prompt prepended by the INJECTION method; task templates fill this.
    pub injection_prompt: Option<String>,
    /// Candidate pool size per FUDGE step.
    pub fudge_top_k: usize,
    /// FUDGE adjustment intensity.
    pub fudge_alpha: f64,
    /// PREADD contrast strength.
    pub preadd_alpha: f64,
    /// Prefix whose logits PREADD contrasts against; task templates fill this.
    pub preadd_prefix: String,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self {
            injection_prompt: None,
            fudge_top_k: 100,
            fudge_alpha: 0.5,
            preadd_alpha: 1.0,
            preadd_prefix: String::new(),
        }
    }
}

/// Plain sampled continuation, no attribute conditioning.
pub fn continuation(
    prompt: &str,
    config: &GenerationConfig,
    generator: &dyn Generator,
) -> Result<String> {
    let outputs = generator.generate(prompt, config, None)?;
    outputs
        .into_iter()
        .next()
        .ok_or_else(|| Error::GenerationFailed("generator returned no continuation".into()))
}

/// Continuation of `injection_prompt + prompt`. Only the newly generated
/// text is returned; the injected text never appears in the completion.
pub fn injection(
    prompt: &str,
    spec: &BaselineSpec,
    config: &GenerationConfig,
    generator: &dyn Generator,
) -> Result<String> {
    let injected = spec
        .injection_prompt
        .as_deref()
        .filter(|p| !p.is_empty())
        .ok_or_else(|| Error::invalid_input("INJECTION requires an injection_prompt"))?;
    let prefixed = format!("{injected} {prompt}");
    continuation(&prefixed, config, generator)
}

/// One step of FUDGE candidate adjustment: restrict `logits` to `candidates`,
/// add `alpha * ln(max(score, floor))` per candidate, and return masked
/// logits ready for softmax over the candidate set.
pub fn fudge_adjusted_logits(
    logits: &[f64],
    candidates: &[usize],
    scores: &[f64],
    alpha: f64,
) -> Vec<f64> {
    let mut adjusted = vec![f64::NEG_INFINITY; logits.len()];
    for (&idx, &score) in candidates.iter().zip(scores) {
        adjusted[idx] = logits[idx] + alpha * score.max(FUDGE_SCORE_FLOOR).ln();
    }
    adjusted
}

/// The candidate pool for a FUDGE step: the `k` highest-probability ids,
/// ties resolving toward lower ids.
pub fn fudge_candidates(distribution: &NextTokenDistribution, k: usize) -> Vec<usize> {
    let probs = distribution.probabilities();
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        probs[b]
            .partial_cmp(&probs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// FUDGE decoding: classifier-guided reranking of the top candidates at
/// every step. Requires full-distribution access and a visible vocabulary.
pub fn fudge_generate(
    prompt: &str,
    spec: &BaselineSpec,
    config: &GenerationConfig,
    generator: &dyn Generator,
    classifier: &dyn AttributeClassifier,
) -> Result<String> {
    let loop_parts = StepLoopParts::prepare(prompt, config, generator)?;
    if spec.fudge_top_k == 0 {
        return Err(Error::invalid_input("fudge_top_k must be >= 1"));
    }
    loop_parts.run(|context, _| {
        let distribution = generator.next_token_distribution(context, None)?;
        let candidates = fudge_candidates(&distribution, spec.fudge_top_k);
        let mut scores = Vec::with_capacity(candidates.len());
        for &candidate in &candidates {
            let candidate_text = if candidate as TokenId == loop_parts.eot {
                context.to_string()
            } else {
                format!("{context} {}", loop_parts.vocab[candidate])
            };
            scores.push(classifier.classify(&candidate_text)?);
        }
        Ok(fudge_adjusted_logits(
            &distribution.logits,
            &candidates,
            &scores,
            spec.fudge_alpha,
        ))
    })
}

/// One step of PREADD contrast: `z_base + alpha * (z_base - z_prefixed)`.
pub fn preadd_contrast_logits(z_base: &[f64], z_prefixed: &[f64], alpha: f64) -> Vec<f64> {
    z_base
        .iter()
        .zip(z_prefixed)
        .map(|(&b, &p)| b + alpha * (b - p))
        .collect()
}

/// PREADD decoding: per-step contrast between prefixed and plain context,
/// followed by the standard sampling chain. Requires full distributions.
pub fn preadd_generate(
    prompt: &str,
    spec: &BaselineSpec,
    config: &GenerationConfig,
    generator: &dyn Generator,
) -> Result<String> {
    if spec.preadd_prefix.is_empty() {
        return Err(Error::invalid_input("PREADD requires a preadd_prefix"));
    }
    let loop_parts =
        StepLoopParts::prepare(prompt, config, generator)?.with_prefix(&spec.preadd_prefix);
    loop_parts.run(|context, prefixed_context| {
        let base = generator.next_token_distribution(context, None)?;
        let prefixed = generator.next_token_distribution(prefixed_context, None)?;
        let mut adjusted =
            preadd_contrast_logits(&base.logits, &prefixed.logits, spec.preadd_alpha);
        logits::apply_temperature(&mut adjusted, config.temperature);
        logits::apply_top_k(&mut adjusted, config.top_k);
        logits::apply_top_p(&mut adjusted, config.top_p);
        Ok(adjusted)
    })
}

/// Shared scaffolding for the step-wise decoders: capability checks, the
/// growing context strings, the sampling RNG, and end-of-text handling.
struct StepLoopParts<'a> {
    vocab: &'a [String],
    eot: TokenId,
    prompt: String,
    prefix: Option<String>,
    config: &'a GenerationConfig,
}

impl<'a> StepLoopParts<'a> {
    fn prepare(
        prompt: &str,
        config: &'a GenerationConfig,
        generator: &'a dyn Generator,
    ) -> Result<Self> {
        if !generator.capabilities().supports_full_distribution {
            return Err(Error::CapabilityMissing {
                capability: "full next-token distribution",
            });
        }
        let vocab = generator.vocabulary().ok_or(Error::CapabilityMissing {
            capability: "visible vocabulary",
        })?;
        let eot = generator.end_of_text_id().ok_or(Error::CapabilityMissing {
            capability: "end-of-text id",
        })?;
        if prompt.is_empty() {
            return Err(Error::invalid_input("prompt must be non-empty"));
        }
        config.validate()?;
        Ok(Self {
            vocab,
            eot,
            prompt: prompt.to_string(),
            prefix: None,
            config,
        })
    }

    fn with_prefix(mut self, prefix: &str) -> Self {
        self.prefix = Some(prefix.to_string());
        self
    }

    /// Run the decode loop. `step` receives the plain context and the
    /// prefixed context and returns the logits to sample from.
    fn run<F>(&self, mut step: F) -> Result<String>
    where
        F: FnMut(&str, &str) -> Result<Vec<f64>>,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let mut context = self.prompt.clone();
        let mut prefixed_context = match &self.prefix {
            Some(prefix) => format!("{prefix} {}", self.prompt),
            None => self.prompt.clone(),
        };
        let mut generated: Vec<String> = Vec::new();

        for _ in 0..self.config.max_new_tokens {
            let logits = step(&context, &prefixed_context)?;
            let id = if self.config.do_sample {
                logits::sample_index(&logits, &mut rng)
            } else {
                logits::argmax_index(&logits)
            } as TokenId;
            if id == self.eot {
                break;
            }
            let word = &self.vocab[id as usize];
            generated.push(word.clone());
            context.push(' ');
            context.push_str(word);
            prefixed_context.push(' ');
            prefixed_context.push_str(word);
        }
        Ok(generated.join(" "))
    }
}

impl BaselineSpec {
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.fudge_top_k == 0 {
            errors.push("fudge_top_k must be >= 1".to_string());
        }
        errors
    }
}
