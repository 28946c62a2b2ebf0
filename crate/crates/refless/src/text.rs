//! Shared word-level tokenization helpers.

/// Lowercased word tokens. Splits on whitespace, then strips leading and
/// trailing non-alphanumeric characters from each piece; punctuation-only
/// pieces are kept as their own tokens so sentence structure stays visible
/// to sequence models.
pub fn word_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        let lower = piece.to_lowercase();
        let core: String = lower
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_string();
        if core.is_empty() {
            out.push(lower);
        } else {
            out.push(core);
        }
    }
    out
}

/// Collapse all runs of whitespace to single spaces and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_are_lowercased_and_stripped() {
        assert_eq!(word_tokens("The cat, sat."), vec!["the", "cat", "sat"]);
    }

    #[test]
    fn punctuation_only_pieces_survive() {
        assert_eq!(word_tokens("a . b"), vec!["a", ".", "b"]);
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_whitespace("  a\t b \n c  "), "a b c");
    }
}
