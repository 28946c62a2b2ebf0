//! ROUGE recall variants with best-on-dev selection.
//!
//! The variant pool is fixed to R1, R2, R4 n-gram recall and RL
//! (longest-common-subsequence recall); peers are scored against the
//! reference multiset per reference, then averaged over references.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::spearman_rho;
use crate::text::word_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RougeVariant {
    R1,
    R2,
    R4,
    RL,
}

impl RougeVariant {
    pub const ALL: [RougeVariant; 4] = [
        RougeVariant::R1,
        RougeVariant::R2,
        RougeVariant::R4,
        RougeVariant::RL,
    ];
}

impl fmt::Display for RougeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RougeVariant::R1 => write!(f, "R1"),
            RougeVariant::R2 => write!(f, "R2"),
            RougeVariant::R4 => write!(f, "R4"),
            RougeVariant::RL => write!(f, "RL"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScore {
    pub variant: RougeVariant,
    pub recall: f64,
}

fn ngrams(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram recall of `peer` against each reference, averaged over
/// references. References shorter than `n` tokens contribute recall 0.
pub fn rouge_n_recall(peer: &str, references: &[String], n: usize) -> Result<RougeScore> {
    let variant = match n {
        1 => RougeVariant::R1,
        2 => RougeVariant::R2,
        4 => RougeVariant::R4,
        other => {
            return Err(Error::Config(format!(
                "unsupported ROUGE n-gram order {other}"
            )))
        }
    };
    if references.is_empty() {
        return Err(Error::EmptyInput("no reference summaries".into()));
    }
    let peer_tokens = word_tokens(peer);
    if peer_tokens.is_empty() {
        return Err(Error::EmptyInput("empty peer summary".into()));
    }
    let peer_counts = ngrams(&peer_tokens, n);
    let mut total = 0.0;
    for reference in references {
        let ref_tokens = word_tokens(reference);
        let ref_counts = ngrams(&ref_tokens, n);
        let denom: usize = ref_counts.values().sum();
        if denom == 0 {
            tracing::warn!(
                n,
                reference_len = ref_tokens.len(),
                "reference shorter than n-gram order; contributes recall 0"
            );
            continue;
        }
        let matched: usize = ref_counts
            .iter()
            .map(|(gram, count)| (*count).min(peer_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        total += matched as f64 / denom as f64;
    }
    Ok(RougeScore {
        variant,
        recall: total / references.len() as f64,
    })
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Longest-common-subsequence length over reference length, averaged
/// over references.
pub fn rouge_l_recall(peer: &str, references: &[String]) -> Result<RougeScore> {
    if references.is_empty() {
        return Err(Error::EmptyInput("no reference summaries".into()));
    }
    let peer_tokens = word_tokens(peer);
    if peer_tokens.is_empty() {
        return Err(Error::EmptyInput("empty peer summary".into()));
    }
    let mut total = 0.0;
    for reference in references {
        let ref_tokens = word_tokens(reference);
        if ref_tokens.is_empty() {
            tracing::warn!("empty reference; contributes recall 0");
            continue;
        }
        total += lcs_len(&peer_tokens, &ref_tokens) as f64 / ref_tokens.len() as f64;
    }
    Ok(RougeScore {
        variant: RougeVariant::RL,
        recall: total / references.len() as f64,
    })
}

/// Score a peer with one variant.
pub fn rouge_recall(peer: &str, references: &[String], variant: RougeVariant) -> Result<RougeScore> {
    match variant {
        RougeVariant::R1 => rouge_n_recall(peer, references, 1),
        RougeVariant::R2 => rouge_n_recall(peer, references, 2),
        RougeVariant::R4 => rouge_n_recall(peer, references, 4),
        RougeVariant::RL => rouge_l_recall(peer, references),
    }
}

/// Pick the variant whose per-system means correlate best (Spearman ρ)
/// with the gold means of `quality` on a dev split. Exact ties go to the
/// lexicographically first variant id.
///
/// `scored` maps each variant to its per-system mean scores.
pub fn select_best_rouge(
    scored: &BTreeMap<RougeVariant, BTreeMap<String, f64>>,
    dev_gold: &crate::corpus::SystemScoreTable,
    quality: usize,
) -> Result<RougeVariant> {
    if scored.len() < 2 {
        return Err(Error::Config(
            "best-ROUGE selection needs at least 2 scored variants".into(),
        ));
    }
    if dev_gold.rows.is_empty() {
        return Err(Error::EmptyInput("empty dev gold table".into()));
    }
    let mut best: Option<(RougeVariant, f64)> = None;
    for (variant, by_system) in scored {
        let shared: Vec<&String> = by_system
            .keys()
            .filter(|sys| dev_gold.rows.contains_key(*sys))
            .collect();
        let xs: Vec<f64> = shared.iter().map(|sys| by_system[*sys]).collect();
        let ys: Vec<f64> = shared
            .iter()
            .map(|sys| dev_gold.rows[*sys].get(quality))
            .collect();
        let rho = spearman_rho(&xs, &ys)?;
        // BTreeMap iteration is already in lexicographic variant order,
        // so a strict improvement is required to displace the incumbent.
        if best.map(|(_, b)| rho > b).unwrap_or(true) {
            best = Some((*variant, rho));
        }
    }
    Ok(best.expect("at least two variants scored").0)
}
