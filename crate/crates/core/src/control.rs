//! Regeneration control: turn a key-token set into either a sparse logit
//! bias (boost positive tokens by `alpha`, suppress negative tokens by
//! `beta`) or a natural-language prefix listing the words to discuss and to
//! avoid, then sample the final continuation.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::{BiasMap, GenerationConfig, Generator, NGramGenerator, TokenId};
use crate::errors::{Error, Result};
use crate::graph::{KeyTokenSet, SelectionConfig};

/// Which regeneration strategy a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlStrategy {
    LogitsBoost,
    PrefixPrompt,
}

/// Control-stage settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlConfig {
    /// Boost added to the logits of positive key-token ids.
    pub alpha: f64,
    /// Suppression subtracted from the logits of negative key-token ids.
    pub beta: f64,
    /// Contextual corpus size `m`.
    pub corpus_size: usize,
    pub selection: SelectionConfig,
    pub strategy: ControlStrategy,
    /// Cap on words per side in the prefix template.
    pub prefix_max_words: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            beta: 6.0,
            corpus_size: 30,
            selection: SelectionConfig::default(),
            strategy: ControlStrategy::LogitsBoost,
            prefix_max_words: 10,
        }
    }
}

impl ControlConfig {
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.alpha < 0.0 {
            errors.push("alpha must be >= 0".to_string());
        }
        if self.beta < 0.0 {
            errors.push("beta must be >= 0".to_string());
        }
        if self.corpus_size == 0 {
            errors.push("corpus_size must be >= 1".to_string());
        }
        if self.prefix_max_words == 0 {
            errors.push("prefix_max_words must be >= 1".to_string());
        }
        errors.extend(self.selection.validation_errors());
        errors
    }
}

/// Maps a graph token (a normalized word) to the vocabulary ids it should
/// control on the paired generator backend.
pub trait VocabularyMapper: Send + Sync {
    fn word_to_ids(&self, word: &str) -> Vec<TokenId>;
}

/// Exact-word mapping for the built-in generator: a graph token controls
/// precisely the id of that word, when the word is in vocabulary.
impl VocabularyMapper for NGramGenerator {
    fn word_to_ids(&self, word: &str) -> Vec<TokenId> {
        self.token_id(word).into_iter().collect()
    }
}

/// Mapper backed by a local id<->string vocabulary file for external
/// tokenizers. A word maps to every id whose decoded string, lowercased and
/// trimmed, equals the word itself or the word with a leading space (the
/// common encoding for word-initial subword pieces).
///
/// File format: a JSON object from token string to integer id.
pub struct FileVocabularyMapper {
    by_word: HashMap<String, Vec<TokenId>>,
}

impl FileVocabularyMapper {
    pub fn from_json_str(json: &str) -> Result<Self> {
        let table: BTreeMap<String, TokenId> = serde_json::from_str(json)
            .map_err(|e| Error::invalid_input(format!("vocabulary file: {e}")))?;
        let mut by_word: HashMap<String, Vec<TokenId>> = HashMap::new();
        for (piece, id) in table {
            let normalized = piece.trim().to_lowercase();
            if normalized.is_empty() {
                continue;
            }
            by_word.entry(normalized).or_default().push(id);
        }
        for ids in by_word.values_mut() {
            ids.sort_unstable();
            ids.dedup();
        }
        Ok(Self { by_word })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

impl VocabularyMapper for FileVocabularyMapper {
    fn word_to_ids(&self, word: &str) -> Vec<TokenId> {
        self.by_word.get(word).cloned().unwrap_or_default()
    }
}

/// The sparse bias realizing the boost/suppress adjustment, plus the graph
/// tokens that had no vocabulary mapping and were skipped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LogitBiasMap {
    pub entries: BiasMap,
    pub skipped_tokens: Vec<String>,
}

/// Build the bias map: `+alpha` for every id reachable from a positive key
/// token, `-beta` for every id reachable from a negative one. An id claimed
/// by both sides resolves to suppression. Unmapped tokens land in the skip
/// list rather than erroring.
pub fn build_logit_bias(
    keys: &KeyTokenSet,
    config: &ControlConfig,
    mapper: &dyn VocabularyMapper,
) -> LogitBiasMap {
    let mut entries = BiasMap::new();
    let mut skipped = Vec::new();

    for token in keys.positive_tokens() {
        let ids = mapper.word_to_ids(token);
        if ids.is_empty() {
            skipped.push(token.to_string());
            continue;
        }
        for id in ids {
            entries.insert(id, config.alpha);
        }
    }
    for token in keys.negative_tokens() {
        let ids = mapper.word_to_ids(token);
        if ids.is_empty() {
            skipped.push(token.to_string());
            continue;
        }
        for id in ids {
            // Suppression wins over a boost claimed by the other side.
            entries.insert(id, -config.beta);
        }
    }
    LogitBiasMap {
        entries,
        skipped_tokens: skipped,
    }
}

/// Regenerate with the logit-bias map applied at every decoding step.
pub fn regenerate_logits_boost(
    prompt: &str,
    keys: &KeyTokenSet,
    config: &ControlConfig,
    generation: &GenerationConfig,
    generator: &dyn Generator,
    mapper: &dyn VocabularyMapper,
) -> Result<(String, LogitBiasMap)> {
    if !generator.capabilities().supports_logit_bias {
        return Err(Error::CapabilityMissing {
            capability: "logit bias",
        });
    }
    let bias = build_logit_bias(keys, config, mapper);
    let outputs = generator.generate(prompt, generation, Some(&bias.entries))?;
    let completion = outputs
        .into_iter()
        .next()
        .ok_or_else(|| Error::GenerationFailed("generator returned no continuation".into()))?;
    Ok((completion, bias))
}

/// Assemble the prefix prompt. Sides are comma-joined in rank order and
/// truncated to `max_words_per_side`; an empty side drops its clause, and an
/// entirely empty key set returns the prompt unchanged.
pub fn build_prefix_prompt(keys: &KeyTokenSet, prompt: &str, max_words_per_side: usize) -> String {
    let join = |tokens: &[(String, f64)]| -> String {
        tokens
            .iter()
            .take(max_words_per_side)
            .map(|(t, _)| t.as_str())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let positive = join(&keys.positive);
    let negative = join(&keys.negative);
    match (positive.is_empty(), negative.is_empty()) {
        (true, true) => prompt.to_string(),
        (false, true) => {
            format!("The following passage often discusses {positive}. {prompt}")
        }
        (true, false) => {
            format!("The following passage does not mention {negative}. {prompt}")
        }
        (false, false) => format!(
            "The following passage often discusses {positive} but does not mention {negative}. {prompt}"
        ),
    }
}

/// Regenerate by prompting with the prefix. Only the newly generated
/// continuation is returned; callers pair it with the original prompt.
pub fn regenerate_prefix(
    prompt: &str,
    keys: &KeyTokenSet,
    config: &ControlConfig,
    generation: &GenerationConfig,
    generator: &dyn Generator,
) -> Result<(String, String)> {
    let prefixed = build_prefix_prompt(keys, prompt, config.prefix_max_words);
    let outputs = generator.generate(&prefixed, generation, None)?;
    let completion = outputs
        .into_iter()
        .next()
        .ok_or_else(|| Error::GenerationFailed("generator returned no continuation".into()))?;
    Ok((completion, prefixed))
}

/// Persisted record of what control was applied for one prompt and strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlDirective {
    pub strategy: ControlStrategy,
    pub bias: Option<BTreeMap<String, f64>>,
    pub prefix: Option<String>,
    pub skipped_tokens: Vec<String>,
}

impl ControlDirective {
    pub fn logits_boost(bias: &LogitBiasMap) -> Self {
        Self {
            strategy: ControlStrategy::LogitsBoost,
            bias: Some(
                bias.entries
                    .iter()
                    .map(|(id, v)| (id.to_string(), *v))
                    .collect(),
            ),
            prefix: None,
            skipped_tokens: bias.skipped_tokens.clone(),
        }
    }

    pub fn prefix_prompt(prefix: &str) -> Self {
        Self {
            strategy: ControlStrategy::PrefixPrompt,
            bias: None,
            prefix: Some(prefix.to_string()),
            skipped_tokens: Vec::new(),
        }
    }
}
