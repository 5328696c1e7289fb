//! Word-level tokenization shared by the token graphs, the lexicon
//! classifier, and the built-in n-gram generator.

use unicode_normalization::UnicodeNormalization;

/// Tokenize text for graph construction: NFC-normalize, lowercase, split on
/// whitespace, and strip leading/trailing punctuation from each piece.
/// Pieces that become empty (pure punctuation) are dropped; order and
/// duplicates are preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect();
    normalized
        .split_whitespace()
        .filter_map(|piece| {
            let trimmed = piece
                .trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase();
            if trimmed.is_empty() {
                None
            } else {
                Some(trimmed)
            }
        })
        .collect()
}

/// True when every character of the token is punctuation or symbol-like.
/// Such tokens are excluded from key-token selection.
pub fn is_pure_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| !c.is_alphanumeric())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_case_and_punctuation() {
        assert_eq!(tokenize("The Dog bites!"), vec!["the", "dog", "bites"]);
    }

    #[test]
    fn empty_input_gives_empty_list() {
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("   \t\n"), Vec::<String>::new());
    }

    #[test]
    fn duplicates_are_kept_in_order() {
        assert_eq!(tokenize("a a a"), vec!["a", "a", "a"]);
    }

    #[test]
    fn interior_punctuation_survives() {
        assert_eq!(tokenize("don't stop"), vec!["don't", "stop"]);
    }

    #[test]
    fn pure_punctuation_tokens_are_dropped() {
        assert_eq!(tokenize("wait -- what ?!"), vec!["wait", "what"]);
    }

    #[test]
    fn nfc_normalization_unifies_compositions() {
        // "é" as a precomposed char vs. "e" + combining acute.
        let composed = "caf\u{e9}";
        let decomposed = "cafe\u{301}";
        assert_eq!(tokenize(composed), tokenize(decomposed));
    }

    #[test]
    fn punctuation_detector() {
        assert!(is_pure_punctuation("--"));
        assert!(!is_pure_punctuation("a--"));
        assert!(!is_pure_punctuation(""));
    }
}
