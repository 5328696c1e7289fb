//! Lexicon attribute classifier: a smoothed ratio of target-consistent to
//! target-inconsistent term counts. A desk-scale stand-in for a fine-tuned
//! classifier; any hosted model can replace it through the HTTP client.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::backends::AttributeClassifier;
use crate::errors::{Error, Result};
use crate::text;

/// Term lists and smoothing for [`LexiconClassifier`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexiconClassifierSpec {
    /// Words counted as consistent with the target attribute.
    pub positive_terms: BTreeSet<String>,
    /// Words counted against the target attribute.
    pub negative_terms: BTreeSet<String>,
    /// Additive smoothing; keeps scores defined and strictly inside (0, 1).
    pub smoothing: f64,
}

impl LexiconClassifierSpec {
    pub fn validation_errors(&self) -> Vec<String> {
        let mut errors = Vec::new();
        // NaN fails the comparison and is rejected too.
        let smoothing_valid = self.smoothing > 0.0;
        if !smoothing_valid {
            errors.push("lexicon smoothing must be > 0".to_string());
        }
        let overlap: Vec<&String> = self
            .positive_terms
            .intersection(&self.negative_terms)
            .collect();
        if !overlap.is_empty() {
            errors.push(format!(
                "lexicon term sets must be disjoint; shared: {}",
                overlap
                    .iter()
                    .map(|s| s.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ));
        }
        errors
    }
}

/// Scores text as `(p + λ) / (p + n + 2λ)` where `p` and `n` are the counts
/// of positive and negative terms among the normalized tokens.
#[derive(Debug, Clone)]
pub struct LexiconClassifier {
    spec: LexiconClassifierSpec,
}

impl LexiconClassifier {
    pub fn new(spec: LexiconClassifierSpec) -> Result<Self> {
        let errors = spec.validation_errors();
        if !errors.is_empty() {
            return Err(Error::InvalidConfig(errors));
        }
        Ok(Self { spec })
    }

    /// Convenience constructor from plain word lists, smoothing 1.
    pub fn from_terms<I, J, S>(positive: I, negative: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(LexiconClassifierSpec {
            positive_terms: positive.into_iter().map(Into::into).collect(),
            negative_terms: negative.into_iter().map(Into::into).collect(),
            smoothing: 1.0,
        })
    }

    pub fn spec(&self) -> &LexiconClassifierSpec {
        &self.spec
    }
}

impl AttributeClassifier for LexiconClassifier {
    fn classify(&self, input: &str) -> Result<f64> {
        let mut positive = 0u64;
        let mut negative = 0u64;
        for token in text::tokenize(input) {
            if self.spec.positive_terms.contains(&token) {
                positive += 1;
            } else if self.spec.negative_terms.contains(&token) {
                negative += 1;
            }
        }
        let lambda = self.spec.smoothing;
        Ok((positive as f64 + lambda) / ((positive + negative) as f64 + 2.0 * lambda))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn good_bad() -> LexiconClassifier {
        LexiconClassifier::from_terms(["good"], ["bad"]).unwrap()
    }

    #[test]
    fn smoothed_ratio_matches_hand_computation() {
        // p = 2, n = 1, λ = 1 → (2 + 1) / (3 + 2) = 0.6
        let score = good_bad().classify("good good bad").unwrap();
        assert!((score - 0.6).abs() < 1e-12);
    }

    #[test]
    fn empty_text_scores_the_symmetric_prior() {
        assert!((good_bad().classify("").unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn score_is_monotone_in_positive_evidence() {
        let clf = good_bad();
        assert!(clf.classify("good good").unwrap() > clf.classify("good").unwrap());
    }

    #[test]
    fn swapping_term_sets_complements_the_score() {
        let forward = good_bad();
        let swapped = LexiconClassifier::from_terms(["bad"], ["good"]).unwrap();
        for input in ["good good bad", "bad", "", "good neutral words bad bad"] {
            let s = forward.classify(input).unwrap();
            let t = swapped.classify(input).unwrap();
            assert!(
                (s + t - 1.0).abs() < 1e-12,
                "input {input:?}: {s} + {t} != 1"
            );
        }
    }

    #[test]
    fn overlapping_term_sets_are_rejected() {
        assert!(LexiconClassifier::from_terms(["nice", "dual"], ["dual"]).is_err());
    }

    #[test]
    fn zero_smoothing_is_rejected() {
        let spec = LexiconClassifierSpec {
            positive_terms: BTreeSet::new(),
            negative_terms: BTreeSet::new(),
            smoothing: 0.0,
        };
        assert!(LexiconClassifier::new(spec).is_err());
    }

    #[test]
    fn matching_is_case_and_punctuation_insensitive() {
        let score = good_bad().classify("Good, GOOD! bad.").unwrap();
        assert!((score - 0.6).abs() < 1e-12);
    }
}
