//! Base-2 perplexity over token or sentence-pair probabilities.

use serde::{Deserialize, Serialize};

use crate::baselines::lm::TokenProbRecord;
use crate::error::{Error, Result};

/// How many of the lowest-probability tokens enter the perplexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KWorstConfig {
    K(usize),
    All,
}

impl KWorstConfig {
    fn resolve(&self, n_tokens: usize) -> Result<usize> {
        match self {
            KWorstConfig::All => Ok(n_tokens),
            KWorstConfig::K(0) => Err(Error::Config("k must be at least 1".into())),
            KWorstConfig::K(k) if *k > n_tokens => Err(Error::Config(format!(
                "k = {k} larger than token count {n_tokens}"
            ))),
            KWorstConfig::K(k) => Ok(*k),
        }
    }
}

/// Base-2 perplexity; at least 1 whenever all input probabilities are ≤ 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityScore {
    pub value: f64,
}

fn checked_log2(p: f64, what: &str) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::Validation(format!(
            "{what} probability {p} is not positive; log2 undefined"
        )));
    }
    if p > 1.0 {
        return Err(Error::Validation(format!(
            "{what} probability {p} exceeds 1"
        )));
    }
    Ok(p.log2())
}

/// Perplexity over the `k` lowest-probability tokens of a record:
/// `2^(-(1/k) * sum log2 p)` over the selected tokens.
pub fn kworst_perplexity(probs: &TokenProbRecord, cfg: KWorstConfig) -> Result<PerplexityScore> {
    if probs.tokens.is_empty() {
        return Err(Error::EmptyInput("token probability record is empty".into()));
    }
    let k = cfg.resolve(probs.tokens.len())?;
    let mut logs = Vec::with_capacity(probs.tokens.len());
    for tp in &probs.tokens {
        logs.push(checked_log2(tp.probability, "token")?);
    }
    // k smallest probabilities = k smallest log2 values.
    logs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sum: f64 = logs.iter().take(k).sum();
    Ok(PerplexityScore {
        value: (2.0f64).powf(-sum / k as f64),
    })
}

/// Which normalizer divides the log sum in next-sentence perplexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NormalizerMode {
    /// Divide the n-1 log terms by the sentence count n (the printed
    /// form; the default).
    #[default]
    SentenceCount,
    /// Divide by the number of sentence pairs (n-1), for sensitivity
    /// analysis.
    PairCount,
}

/// Sentence-level perplexity from consecutive-sentence probabilities
/// `p(s_i | s_{i-1})` for `i = 2..=n`:
/// `2^(-(1/n) * sum log2 p)` with `n` the sentence count.
pub fn next_sentence_perplexity(
    pair_probs: &[f64],
    n_sentences: usize,
    mode: NormalizerMode,
) -> Result<PerplexityScore> {
    if n_sentences < 2 {
        return Err(Error::Validation(format!(
            "next-sentence perplexity undefined for {n_sentences} sentence(s)"
        )));
    }
    if pair_probs.len() != n_sentences - 1 {
        return Err(Error::Shape(format!(
            "expected {} pair probabilities for {} sentences, got {}",
            n_sentences - 1,
            n_sentences,
            pair_probs.len()
        )));
    }
    let mut sum = 0.0;
    for p in pair_probs {
        sum += checked_log2(*p, "sentence-pair")?;
    }
    let normalizer = match mode {
        NormalizerMode::SentenceCount => n_sentences as f64,
        NormalizerMode::PairCount => (n_sentences - 1) as f64,
    };
    Ok(PerplexityScore {
        value: (2.0f64).powf(-sum / normalizer),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::lm::{ProbSource, TokenProb};

    fn record(probs: &[f64]) -> TokenProbRecord {
        TokenProbRecord {
            tokens: probs
                .iter()
                .enumerate()
                .map(|(i, p)| TokenProb {
                    token: format!("t{i}"),
                    probability: *p,
                })
                .collect(),
            source: ProbSource::CausalLm,
        }
    }

    #[test]
    fn certain_tokens_give_perplexity_one() {
        for cfg in [KWorstConfig::K(1), KWorstConfig::K(3), KWorstConfig::All] {
            let score = kworst_perplexity(&record(&[1.0, 1.0, 1.0]), cfg).unwrap();
            assert!((score.value - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_worst_token_by_hand() {
        // probs [1.0, 0.25], k = 1 selects 0.25: 2^(-log2 1/4) = 4.
        let score = kworst_perplexity(&record(&[1.0, 0.25]), KWorstConfig::K(1)).unwrap();
        assert!((score.value - 4.0).abs() < 1e-9);
    }

    #[test]
    fn two_worst_of_uniform_half() {
        let score = kworst_perplexity(&record(&[0.5; 4]), KWorstConfig::K(2)).unwrap();
        assert!((score.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_probability_is_an_error() {
        assert!(kworst_perplexity(&record(&[0.5, 0.0]), KWorstConfig::All).is_err());
    }

    #[test]
    fn empty_record_is_an_error() {
        assert!(kworst_perplexity(&record(&[]), KWorstConfig::All).is_err());
    }

    #[test]
    fn oversized_k_is_an_error() {
        assert!(kworst_perplexity(&record(&[0.5, 0.5]), KWorstConfig::K(3)).is_err());
    }

    #[test]
    fn worst_k_dominates_all_token_perplexity() {
        let probs = [0.9, 0.01, 0.6, 0.3, 0.85];
        let all = kworst_perplexity(&record(&probs), KWorstConfig::All)
            .unwrap()
            .value;
        for k in 1..=probs.len() {
            let worst = kworst_perplexity(&record(&probs), KWorstConfig::K(k))
                .unwrap()
                .value;
            assert!(worst >= all - 1e-12, "k={k}: {worst} < {all}");
        }
    }

    #[test]
    fn certain_pairs_give_sentence_perplexity_one() {
        let score =
            next_sentence_perplexity(&[1.0, 1.0], 3, NormalizerMode::SentenceCount).unwrap();
        assert!((score.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_sentences_by_hand() {
        // n = 2, p = 0.25: 2^(-(1/2)(-2)) = 2.
        let score = next_sentence_perplexity(&[0.25], 2, NormalizerMode::SentenceCount).unwrap();
        assert!((score.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn three_sentences_by_hand() {
        // n = 3, p = (0.5, 0.5): 2^(2/3).
        let score =
            next_sentence_perplexity(&[0.5, 0.5], 3, NormalizerMode::SentenceCount).unwrap();
        assert!((score.value - (2.0f64).powf(2.0 / 3.0)).abs() < 1e-9);
    }

    #[test]
    fn pair_count_normalizer_for_sensitivity() {
        // Same logs divided by n-1 = 2 instead of n = 3.
        let score = next_sentence_perplexity(&[0.5, 0.5], 3, NormalizerMode::PairCount).unwrap();
        assert!((score.value - 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_sentence_is_an_error() {
        assert!(next_sentence_perplexity(&[], 1, NormalizerMode::SentenceCount).is_err());
    }

    #[test]
    fn zero_pair_probability_is_an_error() {
        assert!(next_sentence_perplexity(&[0.0], 2, NormalizerMode::SentenceCount).is_err());
    }

    #[test]
    fn monotone_in_each_pair_probability() {
        let base = next_sentence_perplexity(&[0.5, 0.5], 3, NormalizerMode::SentenceCount)
            .unwrap()
            .value;
        let higher = next_sentence_perplexity(&[0.8, 0.5], 3, NormalizerMode::SentenceCount)
            .unwrap()
            .value;
        assert!(higher <= base);
    }
}
