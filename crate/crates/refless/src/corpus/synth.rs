//! Seeded synthetic corpora for desk-scale experiments.
//!
//! Each synthetic system degrades clean base texts through five
//! corruption channels, one per quality: token mangling (Q1), sentence
//! repetition (Q2), pronoun substitution (Q3), off-topic splicing (Q4)
//! and sentence shuffling (Q5). Gold scores follow the linear map
//! `q_i = 5 - 4 * intensity_i` plus additive noise bounded so that
//! ranking systems by gold equals ranking by intensity, exactly.
//! Generation is a pure function of `(config, seed)`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{DatasetManifest, QualityVector, SummaryRecord, QUALITY_COUNT};
use crate::error::{Error, Result};

/// Corruption intensities of one synthetic system, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemProfile {
    pub system_id: String,
    pub intensities: [f64; QUALITY_COUNT],
}

/// Configuration of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dataset_id: String,
    pub n_topics: usize,
    /// Clean texts; topic `t` uses `base_pool[t % len]`.
    pub base_pool: Vec<String>,
    /// Sentences spliced in by the off-topic channel. When empty, splices
    /// are drawn from other topics' base texts instead.
    #[serde(default)]
    pub distractor_pool: Vec<String>,
    /// Tokens the pronoun channel may replace. When empty, capitalized
    /// tokens that do not start a sentence are treated as entities.
    #[serde(default)]
    pub entity_tokens: Vec<String>,
    pub systems: Vec<SystemProfile>,
    /// Upper bound on gold noise amplitude. The effective amplitude is
    /// further shrunk per channel to keep intensity ranking exact, and per
    /// record to keep scores inside `[1, 5]` (so intensity 0 gives exactly
    /// 5.0 and intensity 1 exactly 1.0).
    #[serde(default = "default_noise_cap")]
    pub noise_cap: f64,
}

fn default_noise_cap() -> f64 {
    0.25
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.base_pool.is_empty() {
            return Err(Error::Validation("synthetic base pool is empty".into()));
        }
        if self.n_topics == 0 {
            return Err(Error::Validation("n_topics must be at least 1".into()));
        }
        if self.systems.is_empty() {
            return Err(Error::Validation("no synthetic systems configured".into()));
        }
        if !(0.0..1.0).contains(&self.noise_cap) {
            return Err(Error::Validation(format!(
                "noise_cap {} outside [0, 1)",
                self.noise_cap
            )));
        }
        for sys in &self.systems {
            for (c, v) in sys.intensities.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 || *v > 1.0 {
                    return Err(Error::Validation(format!(
                        "system '{}' channel {} intensity {} outside [0, 1]",
                        sys.system_id,
                        c + 1,
                        v
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A text as sentences, each a vector of whitespace tokens.
type SentenceTokens = Vec<Vec<String>>;

fn to_sentences(text: &str) -> SentenceTokens {
    crate::baselines::split_sentences(text)
        .into_iter()
        .map(|s| s.split_whitespace().map(str::to_string).collect())
        .collect()
}

fn join_sentences(sentences: &SentenceTokens) -> String {
    sentences
        .iter()
        .map(|s| s.join(" "))
        .collect::<Vec<_>>()
        .join(" ")
}

fn count_for(intensity: f64, total: usize) -> usize {
    ((intensity * total as f64).round() as usize).min(total)
}

/// `k` distinct indices out of `0..n`, in ascending order.
fn pick_indices(rng: &mut ChaCha12Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut chosen: Vec<usize> = idx.into_iter().take(k).collect();
    chosen.sort_unstable();
    chosen
}

/// Replace the content of chosen sentences with off-topic material. The
/// victim's first two tokens (its discourse opening) survive, so the
/// channel corrupts topical focus without also erasing the signals the
/// other channels own.
fn splice_offtopic(
    sentences: &mut SentenceTokens,
    intensity: f64,
    distractors: &[Vec<String>],
    rng: &mut ChaCha12Rng,
) {
    let k = count_for(intensity, sentences.len());
    if k == 0 || distractors.is_empty() {
        return;
    }
    for pos in pick_indices(rng, sentences.len(), k) {
        let pick = &distractors[rng.random_range(0..distractors.len())];
        let keep = sentences[pos].len().min(2);
        let mut spliced: Vec<String> = sentences[pos][..keep].to_vec();
        // Drop the distractor's own opening word so the splice reads as
        // a continuation.
        spliced.extend(pick.iter().skip(1).cloned());
        if spliced.len() > keep {
            sentences[pos] = spliced;
        } else {
            sentences[pos] = pick.clone();
        }
    }
}

fn shuffle_sentences(sentences: &mut SentenceTokens, intensity: f64, rng: &mut ChaCha12Rng) {
    let k = count_for(intensity, sentences.len());
    if k < 2 {
        return;
    }
    // Rotate the chosen positions by one so none keeps its sentence.
    let positions = pick_indices(rng, sentences.len(), k);
    let moved: Vec<Vec<String>> = positions.iter().map(|&p| sentences[p].clone()).collect();
    for (slot, sentence) in positions.iter().zip(moved.iter().cycle().skip(1)) {
        sentences[*slot] = sentence.clone();
    }
}

fn repeat_sentences(sentences: &mut SentenceTokens, intensity: f64, rng: &mut ChaCha12Rng) {
    let k = count_for(intensity, sentences.len());
    if k == 0 {
        return;
    }
    let mut positions = pick_indices(rng, sentences.len(), k);
    positions.reverse();
    for pos in positions {
        let copy = sentences[pos].clone();
        sentences.insert(pos + 1, copy);
    }
}

const PRONOUNS: [&str; 4] = ["it", "they", "she", "he"];

fn is_entity(token: &str, position: usize, entity_tokens: &[String]) -> bool {
    let core = token.trim_matches(|c: char| !c.is_alphanumeric());
    if entity_tokens.is_empty() {
        position > 0 && core.chars().next().is_some_and(|c| c.is_uppercase())
    } else {
        entity_tokens.iter().any(|e| e == core)
    }
}

fn substitute_pronouns(
    sentences: &mut SentenceTokens,
    intensity: f64,
    entity_tokens: &[String],
    rng: &mut ChaCha12Rng,
) {
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for (si, sentence) in sentences.iter().enumerate() {
        for (ti, token) in sentence.iter().enumerate() {
            if is_entity(token, ti, entity_tokens) {
                slots.push((si, ti));
            }
        }
    }
    let k = count_for(intensity, slots.len());
    for idx in pick_indices(rng, slots.len(), k) {
        let (si, ti) = slots[idx];
        let pronoun = PRONOUNS[rng.random_range(0..PRONOUNS.len())];
        let tail: String = sentences[si][ti]
            .chars()
            .rev()
            .take_while(|c| !c.is_alphanumeric())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        sentences[si][ti] = format!("{pronoun}{tail}");
    }
}

const MANGLE_LETTERS: [char; 6] = ['z', 'q', 'x', 'j', 'k', 'w'];

fn mangle_token(token: &str, rng: &mut ChaCha12Rng) -> String {
    let head: String = token
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect();
    let tail: String = token.chars().skip(head.chars().count()).collect();
    let mut chars: Vec<char> = head.chars().collect();
    for _ in 0..2 {
        let pos = rng.random_range(0..=chars.len());
        let letter = MANGLE_LETTERS[rng.random_range(0..MANGLE_LETTERS.len())];
        chars.insert(pos, letter);
    }
    let mut mangled: String = chars.into_iter().collect();
    mangled.push_str(&tail);
    mangled
}

fn mangle_tokens(
    sentences: &mut SentenceTokens,
    intensity: f64,
    entity_tokens: &[String],
    rng: &mut ChaCha12Rng,
) {
    // The channel models typos in content words. Sentence-initial
    // connectives, names and pronouns are spared so every other channel
    // keeps its own signal.
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for (si, sentence) in sentences.iter().enumerate() {
        for (ti, token) in sentence.iter().enumerate() {
            let core = token.trim_matches(|c: char| !c.is_alphanumeric());
            let spared = is_entity(token, ti, entity_tokens)
                || PRONOUNS.contains(&core.to_lowercase().as_str());
            if ti > 0 && !spared && token.chars().any(|c| c.is_alphabetic()) {
                slots.push((si, ti));
            }
        }
    }
    let k = count_for(intensity, slots.len());
    for idx in pick_indices(rng, slots.len(), k) {
        let (si, ti) = slots[idx];
        sentences[si][ti] = mangle_token(&sentences[si][ti], rng);
    }
}

/// Channel-wise noise amplitudes that provably preserve the intensity
/// ranking: gold gaps are `4 * gap` while noise differs by at most
/// `2 * amp`, so `amp < 2 * gap` suffices.
fn noise_amplitudes(systems: &[SystemProfile], cap: f64) -> [f64; QUALITY_COUNT] {
    let mut amps = [cap; QUALITY_COUNT];
    for c in 0..QUALITY_COUNT {
        let mut levels: Vec<f64> = systems.iter().map(|s| s.intensities[c]).collect();
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut min_gap = f64::INFINITY;
        for w in levels.windows(2) {
            let gap = w[1] - w[0];
            if gap > 1e-12 && gap < min_gap {
                min_gap = gap;
            }
        }
        if min_gap.is_finite() {
            amps[c] = cap.min(0.45 * 4.0 * min_gap);
        }
    }
    amps
}

fn record_rng(seed: u64, dataset_id: &str, topic: usize, system: usize) -> ChaCha12Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(dataset_id.as_bytes());
    hasher.update([0x1f]);
    hasher.update((topic as u64).to_le_bytes());
    hasher.update((system as u64).to_le_bytes());
    ChaCha12Rng::from_seed(hasher.finalize().into())
}

/// Generate a synthetic dataset. Pure in `(config, seed)`.
pub fn synthesize_corpus(config: &SynthConfig, seed: u64) -> Result<DatasetManifest> {
    config.validate()?;
    let base: Vec<SentenceTokens> = (0..config.n_topics)
        .map(|t| to_sentences(&config.base_pool[t % config.base_pool.len()]))
        .collect();
    for (t, sentences) in base.iter().enumerate() {
        if sentences.is_empty() {
            return Err(Error::Validation(format!("base text for topic {t} is empty")));
        }
    }
    let explicit_distractors: Vec<Vec<String>> = config
        .distractor_pool
        .iter()
        .flat_map(|text| to_sentences(text))
        .collect();
    let amps = noise_amplitudes(&config.systems, config.noise_cap);

    let mut records = Vec::with_capacity(config.n_topics * config.systems.len());
    for (ti, base_sentences) in base.iter().enumerate() {
        // Off-topic material: the explicit pool, or other topics' text.
        let distractors: Vec<Vec<String>> = if explicit_distractors.is_empty() {
            base.iter()
                .enumerate()
                .filter(|(other, _)| *other != ti)
                .flat_map(|(_, s)| s.iter().cloned())
                .collect()
        } else {
            explicit_distractors.clone()
        };
        for (si, sys) in config.systems.iter().enumerate() {
            let mut rng = record_rng(seed, &config.dataset_id, ti, si);
            let mut sentences = base_sentences.clone();
            let [mangle, repeat, pronoun, splice, shuffle] = [
                sys.intensities[0],
                sys.intensities[1],
                sys.intensities[2],
                sys.intensities[3],
                sys.intensities[4],
            ];
            if splice > 0.0 && distractors.is_empty() {
                return Err(Error::Validation(
                    "off-topic splicing needs a distractor pool or at least 2 topics".into(),
                ));
            }
            splice_offtopic(&mut sentences, splice, &distractors, &mut rng);
            shuffle_sentences(&mut sentences, shuffle, &mut rng);
            repeat_sentences(&mut sentences, repeat, &mut rng);
            substitute_pronouns(&mut sentences, pronoun, &config.entity_tokens, &mut rng);
            mangle_tokens(&mut sentences, mangle, &config.entity_tokens, &mut rng);

            let mut gold = [0.0; QUALITY_COUNT];
            for (c, g) in gold.iter_mut().enumerate() {
                let center = 5.0 - 4.0 * sys.intensities[c];
                let allowed = amps[c].min(5.0 - center).min(center - 1.0).max(0.0);
                let noise = if allowed > 0.0 {
                    rng.random_range(-allowed..=allowed)
                } else {
                    0.0
                };
                *g = center + noise;
            }

            records.push(SummaryRecord {
                record_id: format!("{}-t{:03}-{}", config.dataset_id, ti, sys.system_id),
                dataset_id: config.dataset_id.clone(),
                topic_id: format!("t{ti:03}"),
                system_id: sys.system_id.clone(),
                text: join_sentences(&sentences),
                gold: Some(QualityVector::new(gold)?),
            });
        }
    }
    DatasetManifest::from_records(records)
}

/// Per-channel intensities spread over `{0, 1/(n-1), ..., 1}` and
/// independently permuted across channels, so every channel has the same
/// well-separated levels but system rankings differ per quality.
pub fn latin_intensities(n_systems: usize, seed: u64) -> Vec<[f64; QUALITY_COUNT]> {
    assert!(n_systems >= 2, "need at least 2 systems");
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut per_channel: Vec<Vec<f64>> = Vec::new();
    for _ in 0..QUALITY_COUNT {
        let mut levels: Vec<f64> = (0..n_systems)
            .map(|j| j as f64 / (n_systems - 1) as f64)
            .collect();
        levels.shuffle(&mut rng);
        per_channel.push(levels);
    }
    (0..n_systems)
        .map(|s| {
            let mut v = [0.0; QUALITY_COUNT];
            for (c, ch) in per_channel.iter().enumerate() {
                v[c] = ch[s];
            }
            v
        })
        .collect()
}

const ORDINALS: [&str; 12] = [
    "First", "Second", "Third", "Fourth", "Fifth", "Sixth", "Seventh", "Eighth", "Ninth",
    "Tenth", "Eleventh", "Twelfth",
];

const VERBS: [&str; 12] = [
    "examined", "reported", "measured", "described", "visited", "restored", "surveyed",
    "painted", "repaired", "documented", "inspected", "catalogued",
];

const PREPOSITIONS: [&str; 4] = ["near", "beside", "behind", "under"];

const NAME_SYLLABLES: [&str; 14] = [
    "Mar", "Hol", "An", "Pri", "Ves", "Tor", "Eli", "San", "Rho", "Kel", "Del", "Bran", "Ila",
    "Or",
];
const NAME_ENDINGS: [&str; 8] = ["a", "en", "is", "o", "ur", "ette", "ak", "im"];

const NOUN_SYLLABLES: [&str; 20] = [
    "ba", "re", "mo", "ta", "lin", "dor", "ve", "sa", "ni", "pal", "go", "ri", "fen", "lo",
    "mi", "bel", "son", "du", "har", "tem",
];

/// Filler sentences with vocabulary disjoint from the generated topic
/// words; the off-topic channel splices these in.
const FILLERS: [&str; 10] = [
    "Meanwhile the committee reviewed routine scheduling matters.",
    "Afterwards the council discussed unrelated budget items.",
    "Separately the office circulated a general housekeeping notice.",
    "Elsewhere the staff archived miscellaneous correspondence folders.",
    "Additionally the board postponed an ordinary procedural vote.",
    "Meanwhile the clerk stamped assorted administrative paperwork.",
    "Separately the panel adjourned for a routine coffee interval.",
    "Elsewhere the secretary filed duplicate expense registers.",
    "Additionally the bureau renewed a standard maintenance contract.",
    "Afterwards the auditors checked unremarkable ledger entries.",
];

/// A generated base-text pool plus its entity lexicon.
#[derive(Debug, Clone)]
pub struct BasePool {
    pub texts: Vec<String>,
    pub entity_tokens: Vec<String>,
}

/// Deterministically generate clean base texts: per topic, a private
/// content vocabulary, two named entities, and `sentences_per_text`
/// sentences opened by ordered discourse connectives. The rigid structure
/// is what makes every corruption channel leave a measurable trace.
pub fn generate_base_pool(n_topics: usize, sentences_per_text: usize, seed: u64) -> BasePool {
    assert!(
        (1..=ORDINALS.len()).contains(&sentences_per_text),
        "sentences_per_text must be in 1..={}",
        ORDINALS.len()
    );
    let mut entity_tokens: Vec<String> = Vec::new();
    let mut texts = Vec::with_capacity(n_topics);
    for t in 0..n_topics {
        let mut rng = record_rng(seed, "base-pool", t, 0);
        let mut entities = Vec::new();
        for _ in 0..2 {
            let name = format!(
                "{}{}",
                NAME_SYLLABLES[rng.random_range(0..NAME_SYLLABLES.len())],
                NAME_ENDINGS[rng.random_range(0..NAME_ENDINGS.len())]
            );
            entities.push(name);
        }
        let mut nouns = Vec::new();
        for _ in 0..8 {
            let noun: String = (0..3)
                .map(|_| NOUN_SYLLABLES[rng.random_range(0..NOUN_SYLLABLES.len())])
                .collect();
            nouns.push(noun);
        }
        let mut sentences = Vec::with_capacity(sentences_per_text);
        for (j, ordinal) in ORDINALS.iter().take(sentences_per_text).enumerate() {
            let entity = &entities[j % entities.len()];
            let verb = VERBS[rng.random_range(0..VERBS.len())];
            let prep = PREPOSITIONS[rng.random_range(0..PREPOSITIONS.len())];
            let noun_a = &nouns[rng.random_range(0..nouns.len())];
            let noun_b = &nouns[rng.random_range(0..nouns.len())];
            sentences.push(format!(
                "{ordinal} {entity} {verb} the {noun_a} {prep} the {noun_b}."
            ));
        }
        entity_tokens.extend(entities);
        texts.push(sentences.join(" "));
    }
    entity_tokens.sort();
    entity_tokens.dedup();
    BasePool {
        texts,
        entity_tokens,
    }
}

/// Default distractor sentences for the off-topic channel.
pub fn default_distractor_pool() -> Vec<String> {
    FILLERS.iter().map(|s| s.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{aggregate_by_system, save_corpus};

    fn small_config(intensities: Vec<[f64; 5]>) -> SynthConfig {
        let pool = generate_base_pool(4, 6, 7);
        SynthConfig {
            dataset_id: "syn".into(),
            n_topics: 4,
            base_pool: pool.texts,
            distractor_pool: default_distractor_pool(),
            entity_tokens: pool.entity_tokens,
            systems: intensities
                .into_iter()
                .enumerate()
                .map(|(i, v)| SystemProfile {
                    system_id: format!("s{i:02}"),
                    intensities: v,
                })
                .collect(),
            noise_cap: 0.25,
        }
    }

    #[test]
    fn zero_intensities_give_clean_texts_and_gold_five() {
        let config = small_config(vec![[0.0; 5], [0.0; 5]]);
        let manifest = synthesize_corpus(&config, 1).unwrap();
        for r in &manifest.records {
            assert_eq!(r.gold.unwrap().0, [5.0; 5]);
            let base = &config.base_pool
                [usize::from_str_radix(&r.topic_id[1..], 10).unwrap() % config.base_pool.len()];
            let clean = to_sentences(base);
            assert_eq!(r.text, join_sentences(&clean));
        }
    }

    #[test]
    fn full_repetition_duplicates_a_sentence_and_drops_q2_to_one() {
        let config = small_config(vec![[0.0, 1.0, 0.0, 0.0, 0.0], [0.0; 5]]);
        let manifest = synthesize_corpus(&config, 5).unwrap();
        let record = manifest
            .records
            .iter()
            .find(|r| r.system_id == "s00")
            .unwrap();
        assert_eq!(record.gold.unwrap().get(1), 1.0);
        let sentences = to_sentences(&record.text);
        let duplicated = sentences
            .windows(2)
            .any(|w| w[0] == w[1]);
        assert!(duplicated, "expected a duplicated sentence in {:?}", record.text);
    }

    #[test]
    fn same_config_and_seed_give_byte_identical_manifests() {
        let config = small_config(vec![[0.3, 0.7, 0.1, 0.9, 0.5], [0.8, 0.2, 0.6, 0.0, 1.0]]);
        let a = synthesize_corpus(&config, 42).unwrap();
        let b = synthesize_corpus(&config, 42).unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
        save_corpus(&a, &pa).unwrap();
        save_corpus(&b, &pb).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    }

    #[test]
    fn different_seeds_differ() {
        let config = small_config(vec![[0.5; 5], [0.2; 5]]);
        let a = synthesize_corpus(&config, 1).unwrap();
        let b = synthesize_corpus(&config, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn intensity_out_of_range_rejected() {
        let config = small_config(vec![[1.2, 0.0, 0.0, 0.0, 0.0]]);
        assert!(synthesize_corpus(&config, 1).is_err());
    }

    #[test]
    fn empty_base_pool_rejected() {
        let mut config = small_config(vec![[0.0; 5]]);
        config.base_pool.clear();
        assert!(synthesize_corpus(&config, 1).is_err());
    }

    #[test]
    fn gold_ranking_matches_intensity_ranking_exactly() {
        let intensities = latin_intensities(8, 3);
        let config = small_config(intensities.clone());
        let manifest = synthesize_corpus(&config, 11).unwrap();
        let gold = manifest.gold_scores().unwrap();
        let table = aggregate_by_system(&manifest, &gold).unwrap();
        for c in 0..QUALITY_COUNT {
            for (a, sys_a) in config.systems.iter().enumerate() {
                for (b, sys_b) in config.systems.iter().enumerate() {
                    if a == b {
                        continue;
                    }
                    let (ia, ib) = (sys_a.intensities[c], sys_b.intensities[c]);
                    if ia < ib {
                        let ga = table.rows[&sys_a.system_id].get(c);
                        let gb = table.rows[&sys_b.system_id].get(c);
                        assert!(
                            ga > gb,
                            "channel {c}: intensity {ia} < {ib} but gold {ga} <= {gb}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn pronoun_channel_inserts_pronouns() {
        let config = small_config(vec![[0.0, 0.0, 1.0, 0.0, 0.0]]);
        let manifest = synthesize_corpus(&config, 9).unwrap();
        let text = manifest.records[0].text.to_lowercase();
        let tokens = crate::text::word_tokens(&text);
        let pronouns = tokens
            .iter()
            .filter(|t| PRONOUNS.contains(&t.as_str()))
            .count();
        assert!(pronouns > 0, "expected pronouns in {text}");
    }

    #[test]
    fn splice_channel_uses_distractor_vocabulary() {
        let config = small_config(vec![[0.0, 0.0, 0.0, 1.0, 0.0]]);
        let manifest = synthesize_corpus(&config, 9).unwrap();
        assert!(
            manifest.records[0].text.contains("routine")
                || manifest.records[0].text.contains("unrelated")
                || manifest.records[0].text.contains("administrative")
                || manifest.records[0].text.contains("miscellaneous")
                || manifest.records[0].text.contains("procedural")
                || manifest.records[0].text.contains("duplicate")
                || manifest.records[0].text.contains("maintenance")
                || manifest.records[0].text.contains("unremarkable")
                || manifest.records[0].text.contains("general"),
            "expected filler vocabulary in {}",
            manifest.records[0].text
        );
    }

    #[test]
    fn shuffle_channel_reorders_connectives() {
        let config = small_config(vec![[0.0, 0.0, 0.0, 0.0, 1.0]]);
        let manifest = synthesize_corpus(&config, 9).unwrap();
        let sentences = to_sentences(&manifest.records[0].text);
        let firsts: Vec<&str> = sentences.iter().map(|s| s[0].as_str()).collect();
        let canonical: Vec<&str> = ORDINALS.iter().take(sentences.len()).copied().collect();
        assert_ne!(firsts, canonical, "expected reordered connectives");
    }

    #[test]
    fn base_pool_is_deterministic_and_structured() {
        let a = generate_base_pool(3, 6, 5);
        let b = generate_base_pool(3, 6, 5);
        assert_eq!(a.texts, b.texts);
        for text in &a.texts {
            let sentences = crate::baselines::split_sentences(text);
            assert_eq!(sentences.len(), 6);
            assert!(sentences[0].starts_with("First "));
        }
    }
}
