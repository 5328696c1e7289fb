//! Contextual corpus construction and scoring: sample a set of continuations
//! from the prompt, then score each one with the attribute classifier.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backends::{AttributeClassifier, BiasMap, GenerationConfig, Generator};
use crate::errors::{Error, Result};
use crate::text;

/// One generated continuation, pre-tokenized for graph construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = text::tokenize(&text);
        Self { text, tokens }
    }

    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }
}

/// A sentence paired with its attribute-consistency score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSentence {
    pub sentence: Sentence,
    pub score: f64,
}

/// The scored contextual corpus for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCorpus {
    pub prompt: String,
    pub items: Vec<ScoredSentence>,
}

/// A sample slot that stayed empty after the retry budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DroppedSample {
    pub index: usize,
    pub reason: String,
}

/// Corpus construction output. `sentences` holds the samples in slot order;
/// `dropped` annotates any slot abandoned after retries.
#[derive(Debug, Clone)]
pub struct CorpusBuild {
    pub sentences: Vec<Sentence>,
    pub dropped: Vec<DroppedSample>,
}

/// How many fresh seeds to try per slot after the first attempt fails or
/// comes back empty.
pub const DEFAULT_RETRY_BUDGET: usize = 2;

/// Sample `m` continuations of `prompt`, one slot per seed `config.seed + i`.
/// Retries draw from seeds past the initial block so they can never collide
/// with another slot. With `parallelism > 1` the slots fan out across
/// threads; results are reassembled in slot order, so scheduling cannot
/// change the output.
pub fn build_corpus(
    prompt: &str,
    m: usize,
    config: &GenerationConfig,
    generator: &dyn Generator,
    retry_budget: usize,
    parallelism: usize,
) -> Result<CorpusBuild> {
    if m == 0 {
        return Err(Error::invalid_input("corpus size m must be >= 1"));
    }
    let slots: Vec<usize> = (0..m).collect();
    let results: Mutex<Vec<Option<std::result::Result<Sentence, String>>>> =
        Mutex::new(vec![None; m]);
    let next: Mutex<usize> = Mutex::new(0);

    let workers = parallelism.clamp(1, m);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let slot = {
                    let mut cursor = next.lock().unwrap();
                    if *cursor >= slots.len() {
                        break;
                    }
                    let s = *cursor;
                    *cursor += 1;
                    s
                };
                let outcome = sample_slot(prompt, slot, m, config, generator, retry_budget);
                results.lock().unwrap()[slot] = Some(outcome);
            });
        }
    });

    let mut sentences = Vec::with_capacity(m);
    let mut dropped = Vec::new();
    for (index, outcome) in results.into_inner().unwrap().into_iter().enumerate() {
        match outcome.expect("every slot is filled") {
            Ok(sentence) => sentences.push(sentence),
            Err(reason) => dropped.push(DroppedSample { index, reason }),
        }
    }
    if sentences.is_empty() {
        return Err(Error::GenerationFailed(format!(
            "all {m} corpus samples failed after {retry_budget} retries"
        )));
    }
    Ok(CorpusBuild { sentences, dropped })
}

fn sample_slot(
    prompt: &str,
    slot: usize,
    m: usize,
    config: &GenerationConfig,
    generator: &dyn Generator,
    retry_budget: usize,
) -> std::result::Result<Sentence, String> {
    let bias: Option<&BiasMap> = None;
    let mut last_reason = String::new();
    for attempt in 0..=retry_budget {
        // Attempt 0 uses seed + slot; retries jump past the initial block.
        let seed = config.seed.wrapping_add((slot + attempt * m) as u64);
        match generator.generate(prompt, &config.with_seed(seed), bias) {
            Ok(outputs) => {
                let first = outputs.into_iter().next().unwrap_or_default();
                if first.trim().is_empty() {
                    last_reason = "empty generation".to_string();
                    continue;
                }
                return Ok(Sentence::new(first));
            }
            Err(err) => last_reason = err.to_string(),
        }
    }
    Err(last_reason)
}

/// Score every sentence with the classifier. Order and cardinality are
/// preserved; a failure aborts with the index of the offending item. The
/// classifier sees the continuation only -- the prompt's own attribute must
/// not contaminate the scores.
pub fn score_corpus(
    sentences: Vec<Sentence>,
    classifier: &dyn AttributeClassifier,
    prompt: &str,
) -> Result<ScoredCorpus> {
    if sentences.is_empty() {
        return Err(Error::invalid_input("cannot score an empty sentence list"));
    }
    let mut items = Vec::with_capacity(sentences.len());
    for (index, sentence) in sentences.into_iter().enumerate() {
        let score =
            classifier
                .classify(&sentence.text)
                .map_err(|source| Error::ClassifierFailed {
                    index,
                    source: Box::new(source),
                })?;
        items.push(ScoredSentence { sentence, score });
    }
    Ok(ScoredCorpus {
        prompt: prompt.to_string(),
        items,
    })
}

/// One corpus line of the persisted per-prompt JSONL artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusLine {
    pub idx: usize,
    pub text: String,
    pub score: f64,
}

impl ScoredCorpus {
    /// Serialize as JSONL: one `{"idx", "text", "score"}` object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (idx, item) in self.items.iter().enumerate() {
            let line = CorpusLine {
                idx,
                text: item.sentence.text.clone(),
                score: item.score,
            };
            out.push_str(&serde_json::to_string(&line).expect("corpus line serializes"));
            out.push('\n');
        }
        out
    }

    /// Parse the JSONL form back into a corpus (used by the stage-3-only
    /// `graph` subcommand, where the originating prompt is unknown).
    pub fn from_jsonl(prompt: &str, jsonl: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (lineno, line) in jsonl.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CorpusLine = serde_json::from_str(line)
                .map_err(|e| Error::invalid_input(format!("corpus line {}: {e}", lineno + 1)))?;
            if !(0.0..=1.0).contains(&parsed.score) {
                return Err(Error::invalid_input(format!(
                    "corpus line {}: score {} outside [0, 1]",
                    lineno + 1,
                    parsed.score
                )));
            }
            items.push(ScoredSentence {
                sentence: Sentence::new(parsed.text),
                score: parsed.score,
            });
        }
        if items.is_empty() {
            return Err(Error::invalid_input("corpus JSONL contained no items"));
        }
        Ok(Self {
            prompt: prompt.to_string(),
            items,
        })
    }
}
