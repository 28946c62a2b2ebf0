//! Comparison systems: ROUGE recall variants, k-worst-token LM
//! perplexity and next-sentence perplexity.

mod lm;
mod perplexity;
mod rouge;
mod sentences;

pub use lm::{
    read_score_cache, write_score_cache, BigramLm, CacheScorer, MaskedBigramLm, NspScorer,
    OrdinalNspScorer, ProbSource, TableScorer, TokenProb, TokenProbRecord, TokenScorer,
    external_lm_scores, resolve_adapter,
};
pub use perplexity::{
    kworst_perplexity, next_sentence_perplexity, KWorstConfig, NormalizerMode, PerplexityScore,
};
pub use rouge::{
    rouge_l_recall, rouge_n_recall, rouge_recall, select_best_rouge, RougeScore, RougeVariant,
};
pub use sentences::split_sentences;
