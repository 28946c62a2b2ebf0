//! Token vocabularies fitted on training texts.
//!
//! The word-level path backs the recurrent encoder (unknown words map to
//! the reserved `[UNK]` symbol). The sub-word path backs the transformer:
//! unknown words decompose greedily into pieces drawn from the fitted
//! vocabulary (whole words plus character pieces with a `##` continuation
//! prefix); words that would explode into too many pieces collapse to
//! `[UNK]`, which keeps token counts commensurate with word counts.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::text::word_tokens;

pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";

pub const UNK_ID: usize = 0;
pub const CLS_ID: usize = 1;
pub const SEP_ID: usize = 2;

const MAX_PIECES_PER_WORD: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate vocab token '{t}'")));
            }
        }
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Validation("vocab must start with [UNK]".into()));
        }
        Ok(Vocab { tokens, index })
    }

    /// Fit a word-level vocabulary: words seen at least `min_count`
    /// times, plus the reserved symbols. Ordering is deterministic
    /// (count-descending, then lexicographic).
    pub fn fit_words<S: AsRef<str>>(texts: &[S], min_count: usize) -> Result<Self> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for text in texts {
            for token in word_tokens(text.as_ref()) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens = vec![UNK.to_string(), CLS.to_string(), SEP.to_string()];
        tokens.extend(kept.into_iter().map(|(t, _)| t));
        Vocab::from_tokens(tokens)
    }

    /// Fit a sub-word vocabulary: frequent whole words plus every
    /// observed character as both a word-initial piece and a `##`
    /// continuation piece.
    pub fn fit_subwords<S: AsRef<str>>(texts: &[S], min_count: usize) -> Result<Self> {
        let mut vocab = Vocab::fit_words(texts, min_count)?;
        let mut chars: Vec<char> = texts
            .iter()
            .flat_map(|t| word_tokens(t.as_ref()))
            .flat_map(|w| w.chars().collect::<Vec<_>>())
            .collect();
        chars.sort_unstable();
        chars.dedup();
        for c in chars {
            for piece in [c.to_string(), format!("##{c}")] {
                if !vocab.index.contains_key(&piece) {
                    vocab.index.insert(piece.clone(), vocab.tokens.len());
                    vocab.tokens.push(piece);
                }
            }
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn from_token_list(tokens: Vec<String>) -> Result<Self> {
        Vocab::from_tokens(tokens)
    }

    /// Word-level ids; unknown words map to `[UNK]`.
    pub fn encode_words(&self, text: &str) -> Result<Vec<usize>> {
        let words = word_tokens(text);
        if words.is_empty() {
            return Err(Error::EmptyInput("cannot encode empty text".into()));
        }
        Ok(words
            .iter()
            .map(|w| self.id(w).unwrap_or(UNK_ID))
            .collect())
    }

    fn word_pieces(&self, word: &str) -> Vec<usize> {
        if let Some(id) = self.id(word) {
            return vec![id];
        }
        // Greedy longest-match decomposition.
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut matched = None;
            for end in (start + 1..=chars.len()).rev() {
                let piece: String = chars[start..end].iter().collect();
                let keyed = if start == 0 { piece } else { format!("##{piece}") };
                if let Some(id) = self.id(&keyed) {
                    matched = Some((id, end));
                    break;
                }
            }
            match matched {
                Some((id, end)) => {
                    pieces.push(id);
                    start = end;
                }
                None => return vec![UNK_ID],
            }
            if pieces.len() > MAX_PIECES_PER_WORD {
                return vec![UNK_ID];
            }
        }
        pieces
    }

    /// Sub-word ids wrapped in `[CLS]` ... `[SEP]`.
    pub fn encode_subwords(&self, text: &str) -> Result<Vec<usize>> {
        let words = word_tokens(text);
        if words.is_empty() {
            return Err(Error::EmptyInput("cannot encode empty text".into()));
        }
        let mut ids = vec![CLS_ID];
        for word in &words {
            ids.extend(self.word_pieces(word));
        }
        ids.push(SEP_ID);
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_words_map_to_their_ids() {
        let vocab = Vocab::fit_words(&["the cat the cat the dog"], 1).unwrap();
        let ids = vocab.encode_words("the cat").unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(vocab.token(ids[0]), "the");
        assert_eq!(vocab.token(ids[1]), "cat");
    }

    #[test]
    fn rare_words_become_unk() {
        let vocab = Vocab::fit_words(&["the the cat cat zebra"], 2).unwrap();
        let ids = vocab.encode_words("the zebra").unwrap();
        assert_eq!(ids[1], UNK_ID);
    }

    #[test]
    fn fitting_is_deterministic() {
        let texts = ["b a a c c c", "a b"];
        assert_eq!(
            Vocab::fit_words(&texts, 1).unwrap(),
            Vocab::fit_words(&texts, 1).unwrap()
        );
        // count-descending then lexicographic: c(3), a(3), b(2)...
        let vocab = Vocab::fit_words(&texts, 1).unwrap();
        assert_eq!(vocab.token(3), "a");
        assert_eq!(vocab.token(4), "c");
        assert_eq!(vocab.token(5), "b");
    }

    #[test]
    fn subwords_wrap_with_cls_and_sep() {
        let vocab = Vocab::fit_subwords(&["the cat sat"], 1).unwrap();
        let ids = vocab.encode_subwords("the cat").unwrap();
        assert_eq!(*ids.first().unwrap(), CLS_ID);
        assert_eq!(*ids.last().unwrap(), SEP_ID);
        assert_eq!(ids.len(), 4);
    }

    #[test]
    fn short_unknown_words_decompose_into_pieces() {
        let vocab = Vocab::fit_subwords(&["the cat sat"], 1).unwrap();
        // "act" is unseen as a word but its characters are known.
        let ids = vocab.encode_subwords("act").unwrap();
        assert_eq!(ids.len(), 5); // CLS a ##c ##t SEP
        assert_eq!(vocab.token(ids[1]), "a");
        assert_eq!(vocab.token(ids[2]), "##c");
        assert_eq!(vocab.token(ids[3]), "##t");
    }

    #[test]
    fn long_garbage_words_collapse_to_unk() {
        let vocab = Vocab::fit_subwords(&["the cat sat"], 1).unwrap();
        let ids = vocab.encode_subwords("catastrophe").unwrap();
        assert_eq!(ids, vec![CLS_ID, UNK_ID, SEP_ID]);
    }

    #[test]
    fn unknown_characters_are_unk() {
        let vocab = Vocab::fit_subwords(&["abc"], 1).unwrap();
        let ids = vocab.encode_subwords("xyz").unwrap();
        assert_eq!(ids, vec![CLS_ID, UNK_ID, SEP_ID]);
    }

    #[test]
    fn empty_text_is_an_error() {
        let vocab = Vocab::fit_words(&["a"], 1).unwrap();
        assert!(vocab.encode_words("   ").is_err());
        assert!(vocab.encode_subwords("").is_err());
    }

    #[test]
    fn round_trip_through_token_list() {
        let vocab = Vocab::fit_subwords(&["some words here"], 1).unwrap();
        let rebuilt = Vocab::from_token_list(vocab.tokens().to_vec()).unwrap();
        assert_eq!(vocab, rebuilt);
    }
}
