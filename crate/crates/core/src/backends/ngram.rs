//! Built-in word-level n-gram generator.
//!
//! Trained once from a plain-text seed corpus (one sentence per line), the
//! model conditions on the previous two words with add-one smoothing and
//! backs off to a one-word context, then to the uniform distribution, when
//! a context was never observed. Everything is deterministic given the
//! inputs and the seed, and the full next-token distribution is available,
//! so every control strategy and baseline can run against it offline.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::logits;
use super::{
    check_generate_inputs, BiasMap, GenerationConfig, Generator, GeneratorCapabilities,
    NextTokenDistribution, TokenId,
};
use crate::errors::{Error, Result};
use crate::text;

/// End-of-text marker appended to every training sentence. Normalized words
/// never contain `<` or `>`, so it cannot collide with corpus tokens.
pub const END_OF_TEXT: &str = "</s>";

/// Word-level generator with two-word contexts and add-one smoothing.
#[derive(Debug, Clone)]
pub struct NGramGenerator {
    vocab: Vec<String>,
    index: HashMap<String, TokenId>,
    eot: TokenId,
    // Counts keyed by observed contexts; absent context means "back off".
    two_word: HashMap<(TokenId, TokenId), HashMap<TokenId, u64>>,
    two_word_totals: HashMap<(TokenId, TokenId), u64>,
    one_word: HashMap<TokenId, HashMap<TokenId, u64>>,
    one_word_totals: HashMap<TokenId, u64>,
}

impl NGramGenerator {
    /// Train from seed-corpus text, one sentence per line. Lines that
    /// tokenize to nothing are skipped; at least one token is required.
    pub fn from_corpus_text(corpus: &str) -> Result<Self> {
        let sentences: Vec<Vec<String>> = corpus
            .lines()
            .map(text::tokenize)
            .filter(|tokens| !tokens.is_empty())
            .collect();
        if sentences.is_empty() {
            return Err(Error::invalid_input(
                "seed corpus contains no tokenizable sentences",
            ));
        }

        let mut words: Vec<String> = sentences
            .iter()
            .flatten()
            .cloned()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        words.push(END_OF_TEXT.to_string());
        words.sort();

        let mut model = Self::with_vocabulary(words);
        for sentence in &sentences {
            let mut ids: Vec<TokenId> = sentence.iter().map(|w| model.index[w.as_str()]).collect();
            ids.push(model.eot);
            for (pos, &target) in ids.iter().enumerate() {
                if pos >= 1 {
                    let ctx = ids[pos - 1];
                    *model
                        .one_word
                        .entry(ctx)
                        .or_default()
                        .entry(target)
                        .or_insert(0) += 1;
                    *model.one_word_totals.entry(ctx).or_insert(0) += 1;
                }
                if pos >= 2 {
                    let ctx = (ids[pos - 2], ids[pos - 1]);
                    *model
                        .two_word
                        .entry(ctx)
                        .or_default()
                        .entry(target)
                        .or_insert(0) += 1;
                    *model.two_word_totals.entry(ctx).or_insert(0) += 1;
                }
            }
        }
        Ok(model)
    }

    pub fn from_corpus_file(path: &Path) -> Result<Self> {
        let corpus = std::fs::read_to_string(path)?;
        Self::from_corpus_text(&corpus)
    }

    /// Untrained model over a fixed vocabulary: every context falls back to
    /// the uniform distribution. Useful as a reference scorer.
    pub fn from_vocabulary<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut unique: std::collections::BTreeSet<String> =
            words.into_iter().map(Into::into).collect();
        unique.insert(END_OF_TEXT.to_string());
        Self::with_vocabulary(unique.into_iter().collect())
    }

    fn with_vocabulary(mut vocab: Vec<String>) -> Self {
        vocab.sort();
        vocab.dedup();
        let index: HashMap<String, TokenId> = vocab
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as TokenId))
            .collect();
        let eot = index[END_OF_TEXT];
        Self {
            vocab,
            index,
            eot,
            two_word: HashMap::new(),
            two_word_totals: HashMap::new(),
            one_word: HashMap::new(),
            one_word_totals: HashMap::new(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn token_id(&self, word: &str) -> Option<TokenId> {
        self.index.get(word).copied()
    }

    /// Probability of `target` given the last one or two context words,
    /// following the backoff chain. `None` entries stand for out-of-vocabulary
    /// context or target words; an unknown target scores like a zero-count
    /// word at the active level.
    fn target_probability(&self, context: &[Option<TokenId>], target: Option<TokenId>) -> f64 {
        let vocab = self.vocab_size() as f64;
        let n = context.len();
        if n >= 2 {
            if let (Some(a), Some(b)) = (context[n - 2], context[n - 1]) {
                if let Some(&total) = self.two_word_totals.get(&(a, b)) {
                    let count = target
                        .and_then(|t| self.two_word.get(&(a, b)).and_then(|m| m.get(&t)))
                        .copied()
                        .unwrap_or(0);
                    return (count as f64 + 1.0) / (total as f64 + vocab);
                }
            }
        }
        if n >= 1 {
            if let Some(b) = context[n - 1] {
                if let Some(&total) = self.one_word_totals.get(&b) {
                    let count = target
                        .and_then(|t| self.one_word.get(&b).and_then(|m| m.get(&t)))
                        .copied()
                        .unwrap_or(0);
                    return (count as f64 + 1.0) / (total as f64 + vocab);
                }
            }
        }
        1.0 / vocab
    }

    /// Full next-token probability vector for a context of resolved ids.
    fn distribution(&self, context: &[Option<TokenId>]) -> Vec<f64> {
        let vocab = self.vocab_size() as f64;
        let n = context.len();
        if n >= 2 {
            if let (Some(a), Some(b)) = (context[n - 2], context[n - 1]) {
                if let Some(&total) = self.two_word_totals.get(&(a, b)) {
                    let counts = &self.two_word[&(a, b)];
                    return (0..self.vocab_size())
                        .map(|t| {
                            let count = counts.get(&(t as TokenId)).copied().unwrap_or(0);
                            (count as f64 + 1.0) / (total as f64 + vocab)
                        })
                        .collect();
                }
            }
        }
        if n >= 1 {
            if let Some(b) = context[n - 1] {
                if let Some(&total) = self.one_word_totals.get(&b) {
                    let counts = &self.one_word[&b];
                    return (0..self.vocab_size())
                        .map(|t| {
                            let count = counts.get(&(t as TokenId)).copied().unwrap_or(0);
                            (count as f64 + 1.0) / (total as f64 + vocab)
                        })
                        .collect();
                }
            }
        }
        vec![1.0 / vocab; self.vocab_size()]
    }

    fn resolve(&self, words: &[String]) -> Vec<Option<TokenId>> {
        words.iter().map(|w| self.token_id(w)).collect()
    }

    fn logits_for_context(&self, context: &[Option<TokenId>], bias: Option<&BiasMap>) -> Vec<f64> {
        let mut logits: Vec<f64> = self
            .distribution(context)
            .into_iter()
            .map(f64::ln)
            .collect();
        if let Some(bias) = bias {
            logits::apply_bias(&mut logits, bias);
        }
        logits
    }
}

impl Generator for NGramGenerator {
    fn capabilities(&self) -> GeneratorCapabilities {
        GeneratorCapabilities {
            supports_logit_bias: true,
            supports_full_distribution: true,
            supports_sequence_scoring: true,
        }
    }

    fn generate(
        &self,
        prompt: &str,
        config: &GenerationConfig,
        bias: Option<&BiasMap>,
    ) -> Result<Vec<String>> {
        check_generate_inputs(prompt, config, bias, self.capabilities())?;
        let mut context = self.resolve(&text::tokenize(prompt));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut output = Vec::new();

        for _ in 0..config.max_new_tokens {
            let mut logits = self.logits_for_context(&context, bias);
            logits::apply_temperature(&mut logits, config.temperature);
            logits::apply_top_k(&mut logits, config.top_k);
            logits::apply_top_p(&mut logits, config.top_p);
            let id = if config.do_sample {
                logits::sample_index(&logits, &mut rng)
            } else {
                logits::argmax_index(&logits)
            } as TokenId;
            if id == self.eot {
                break;
            }
            output.push(self.vocab[id as usize].clone());
            context.push(Some(id));
        }
        Ok(vec![output.join(" ")])
    }

    fn next_token_distribution(
        &self,
        prefix: &str,
        bias: Option<&BiasMap>,
    ) -> Result<NextTokenDistribution> {
        let context = self.resolve(&text::tokenize(prefix));
        let logits = self.logits_for_context(&context, bias);
        Ok(NextTokenDistribution {
            vocab_size: logits.len(),
            logits,
        })
    }

    fn score_sequence(&self, prompt: &str, completion: &str) -> Result<f64> {
        if completion.is_empty() {
            return Err(Error::invalid_input("completion must be non-empty"));
        }
        let completion_tokens = text::tokenize(completion);
        if completion_tokens.is_empty() {
            return Err(Error::invalid_input(
                "completion has no scorable tokens after normalization",
            ));
        }
        let mut context = self.resolve(&text::tokenize(prompt));
        let mut total_nll = 0.0;
        for word in &completion_tokens {
            let target = self.token_id(word);
            let p = self.target_probability(&context, target);
            total_nll -= p.ln();
            context.push(target);
        }
        Ok(total_nll / completion_tokens.len() as f64)
    }

    fn vocabulary(&self) -> Option<&[String]> {
        Some(&self.vocab)
    }

    fn end_of_text_id(&self) -> Option<TokenId> {
        Some(self.eot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model() -> NGramGenerator {
        NGramGenerator::from_corpus_text(
            "the dog runs fast\nthe dog sleeps now\nthe cat sleeps here\na dog runs away\n",
        )
        .unwrap()
    }

    #[test]
    fn vocabulary_ids_follow_sorted_order() {
        let model = tiny_model();
        let vocab = model.vocabulary().unwrap();
        let mut sorted = vocab.to_vec();
        sorted.sort();
        assert_eq!(vocab, sorted.as_slice());
        assert!(vocab.contains(&END_OF_TEXT.to_string()));
        assert_eq!(model.end_of_text_id(), model.token_id(END_OF_TEXT));
    }

    #[test]
    fn generation_is_deterministic_under_fixed_seed() {
        let model = tiny_model();
        let config = GenerationConfig {
            seed: 7,
            ..Default::default()
        };
        let a = model.generate("the dog", &config, None).unwrap();
        let b = model.generate("the dog", &config, None).unwrap();
        assert_eq!(a, b);
        assert!(!a[0].is_empty());
    }

    #[test]
    fn generation_respects_token_budget() {
        let model = tiny_model();
        let config = GenerationConfig {
            max_new_tokens: 5,
            ..Default::default()
        };
        let out = model.generate("the dog", &config, None).unwrap();
        assert!(text::tokenize(&out[0]).len() <= 5);
    }

    #[test]
    fn strong_negative_bias_suppresses_a_token() {
        let model = tiny_model();
        let bites = model.token_id("runs").unwrap();
        let mut bias = BiasMap::new();
        bias.insert(bites, -1e9);
        for seed in 0..20 {
            let config = GenerationConfig {
                seed,
                ..Default::default()
            };
            let out = model.generate("the dog", &config, Some(&bias)).unwrap();
            assert!(
                !text::tokenize(&out[0]).contains(&"runs".to_string()),
                "seed {seed} produced suppressed token: {}",
                out[0]
            );
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let model = tiny_model();
        let config = GenerationConfig {
            max_new_tokens: 0,
            ..Default::default()
        };
        assert!(model.generate("the dog", &config, None).is_err());
    }

    #[test]
    fn empty_prompt_is_rejected() {
        let model = tiny_model();
        assert!(model
            .generate("", &GenerationConfig::default(), None)
            .is_err());
    }

    #[test]
    fn unseen_context_on_untrained_model_is_uniform() {
        // 15 words + end-of-text marker = 16 entries.
        let words: Vec<String> = (0..15).map(|i| format!("w{i:02}")).collect();
        let model = NGramGenerator::from_vocabulary(words);
        assert_eq!(model.vocab_size(), 16);
        let dist = model
            .next_token_distribution("anything goes", None)
            .unwrap();
        let probs = dist.probabilities();
        for p in probs {
            assert!((p - 1.0 / 16.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bias_on_uniform_three_token_vocab_matches_direct_softmax() {
        // Two words plus the end-of-text marker give vocab 3 with uniform
        // logits; a +4 bias on one id yields softmax (e^4/(e^4+2), 1/(e^4+2),
        // 1/(e^4+2)), roughly (0.9647, 0.0177, 0.0177).
        let model = NGramGenerator::from_vocabulary(["w0", "w1"]);
        assert_eq!(model.vocab_size(), 3);
        let boosted = model.token_id("w0").unwrap();
        let mut bias = BiasMap::new();
        bias.insert(boosted, 4.0);
        let probs = model
            .next_token_distribution("anything", Some(&bias))
            .unwrap()
            .probabilities();
        let e4 = 4.0f64.exp();
        for (id, p) in probs.iter().enumerate() {
            let expected = if id as TokenId == boosted {
                e4 / (e4 + 2.0)
            } else {
                1.0 / (e4 + 2.0)
            };
            assert!((p - expected).abs() < 1e-9, "id {id}: {p} vs {expected}");
        }
        assert!((probs[boosted as usize] - 0.9647).abs() < 1e-4);
    }

    #[test]
    fn uniform_model_scores_ln_vocab() {
        let words: Vec<String> = (0..15).map(|i| format!("w{i:02}")).collect();
        let model = NGramGenerator::from_vocabulary(words);
        let nll = model.score_sequence("w00 w01", "w02 w03 w04").unwrap();
        assert!((nll - (16.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_completion_is_rejected_by_scorer() {
        let model = tiny_model();
        assert!(model.score_sequence("the dog", "").is_err());
        assert!(model.score_sequence("the dog", "!!!").is_err());
    }

    #[test]
    fn backoff_prefers_two_word_context() {
        let model = tiny_model();
        // "the dog" was observed twice, followed by runs/sleeps once each.
        // P(runs | the dog) = (1 + 1) / (2 + V).
        let v = model.vocab_size() as f64;
        let dist = model.next_token_distribution("the dog", None).unwrap();
        let probs = dist.probabilities();
        let runs = model.token_id("runs").unwrap() as usize;
        assert!((probs[runs] - 2.0 / (2.0 + v)).abs() < 1e-12);
    }

    #[test]
    fn backoff_uses_one_word_context_when_pair_is_unseen() {
        let model = tiny_model();
        // "away dog" never occurs as a pair, but "dog" is a known context
        // with 3 observed followers (runs twice, sleeps once).
        // P(runs | dog) = (2 + 1) / (3 + V).
        let v = model.vocab_size() as f64;
        let dist = model.next_token_distribution("away dog", None).unwrap();
        let probs = dist.probabilities();
        let runs = model.token_id("runs").unwrap() as usize;
        assert!((probs[runs] - 3.0 / (3.0 + v)).abs() < 1e-12);
    }

    #[test]
    fn oov_target_scores_like_zero_count_word() {
        let model = tiny_model();
        let v = model.vocab_size() as f64;
        // Context "the dog" has total 2; an unknown target gets (0+1)/(2+V).
        let nll = model.score_sequence("the dog", "zebra").unwrap();
        assert!((nll + (1.0 / (2.0 + v)).ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(NGramGenerator::from_corpus_text("").is_err());
        assert!(NGramGenerator::from_corpus_text("!!! ???\n").is_err());
    }
}
