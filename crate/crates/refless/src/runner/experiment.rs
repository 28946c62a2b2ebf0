//! The end-to-end protocol: for each fold, tune on dev, train, predict
//! the held-out dataset, and correlate per-system means against gold.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use crate::baselines::{
    kworst_perplexity, next_sentence_perplexity, resolve_adapter, rouge_recall,
    select_best_rouge, split_sentences, BigramLm, KWorstConfig, MaskedBigramLm, RougeVariant,
    TokenScorer,
};
use crate::corpus::synth::{
    default_distractor_pool, generate_base_pool, latin_intensities, synthesize_corpus,
    SynthConfig, SystemProfile,
};
use crate::corpus::{
    aggregate_by_system, load_corpus, save_corpus, save_system_table, DatasetManifest,
    QualityVector, SummaryRecord, SystemScoreTable, QUALITY_COUNT,
};
use crate::encoders::{save_checkpoint, Encoder, EncoderKind, Vocab};
use crate::error::{Error, Result};
use crate::eval::{
    correlate_scalar, correlate_systems, make_folds, spearman_rho, tune, write_report,
    Coefficients, CorrelationReport, FoldSpec, ReportEntry,
};
use crate::heads::{train_on, QeModel, QualityPrediction, TrainSample};
use crate::runner::config::{ExperimentConfig, QeSection};
use crate::runner::manifest::{sha256_file, RunManifest, RunStatus};

/// A materialized dataset plus its reference summaries per topic.
struct DatasetBundle {
    manifest: DatasetManifest,
    references: BTreeMap<String, Vec<String>>,
}

pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub fold_report_paths: Vec<PathBuf>,
    pub report_path: PathBuf,
    pub merged_report: CorrelationReport,
}

fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix-style mixing keeps per-purpose streams independent.
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(b.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn materialize_datasets(
    config: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
    input_hashes: &mut BTreeMap<String, String>,
) -> Result<Vec<DatasetBundle>> {
    let datasets_dir = out_dir.join("datasets");
    std::fs::create_dir_all(&datasets_dir).map_err(|e| Error::io(&datasets_dir, e))?;
    let mut bundles = Vec::new();
    for (idx, source) in config.datasets.iter().enumerate() {
        let bundle = match (&source.path, &source.synth) {
            (Some(path), None) => {
                let manifest = load_corpus(path)?;
                if manifest.dataset_id != source.id {
                    return Err(Error::Config(format!(
                        "dataset '{}' file carries dataset_id '{}'",
                        source.id, manifest.dataset_id
                    )));
                }
                input_hashes.insert(path.display().to_string(), sha256_file(path)?);
                let references = match &source.references {
                    Some(ref_path) => {
                        input_hashes
                            .insert(ref_path.display().to_string(), sha256_file(ref_path)?);
                        load_references(ref_path)?
                    }
                    None => BTreeMap::new(),
                };
                DatasetBundle {
                    manifest,
                    references,
                }
            }
            (None, Some(synth)) => {
                let ds_seed = derive_seed(seed, 11, idx as u64);
                let pool =
                    generate_base_pool(synth.n_topics, synth.sentences_per_text, ds_seed);
                let systems: Vec<SystemProfile> = match &synth.systems {
                    Some(explicit) => explicit.clone(),
                    None => latin_intensities(synth.n_systems, derive_seed(seed, 13, idx as u64))
                        .into_iter()
                        .enumerate()
                        .map(|(s, intensities)| SystemProfile {
                            system_id: format!("s{s:02}"),
                            intensities,
                        })
                        .collect(),
                };
                let synth_config = SynthConfig {
                    dataset_id: source.id.clone(),
                    n_topics: synth.n_topics,
                    base_pool: pool.texts.clone(),
                    distractor_pool: default_distractor_pool(),
                    entity_tokens: pool.entity_tokens.clone(),
                    systems,
                    noise_cap: synth.noise_cap,
                };
                let manifest =
                    synthesize_corpus(&synth_config, derive_seed(seed, 17, idx as u64))?;
                save_corpus(&manifest, &datasets_dir.join(format!("{}.jsonl", source.id)))?;
                // References for ROUGE: the clean base text of each topic.
                let mut references = BTreeMap::new();
                for (t, text) in pool.texts.iter().enumerate() {
                    references.insert(format!("t{t:03}"), vec![text.clone()]);
                }
                let ref_records: Vec<SummaryRecord> = pool
                    .texts
                    .iter()
                    .enumerate()
                    .map(|(t, text)| SummaryRecord {
                        record_id: format!("{}-t{:03}-reference", source.id, t),
                        dataset_id: source.id.clone(),
                        topic_id: format!("t{t:03}"),
                        system_id: "reference".into(),
                        text: text.clone(),
                        gold: None,
                    })
                    .collect();
                save_corpus(
                    &DatasetManifest::from_records(ref_records)?,
                    &datasets_dir.join(format!("{}.refs.jsonl", source.id)),
                )?;
                DatasetBundle {
                    manifest,
                    references,
                }
            }
            _ => unreachable!("validated by ExperimentConfig::validate"),
        };
        bundles.push(bundle);
    }
    Ok(bundles)
}

/// Reference summaries grouped by topic id.
fn load_references(path: &Path) -> Result<BTreeMap<String, Vec<String>>> {
    let manifest = load_corpus(path)?;
    let mut refs: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in &manifest.records {
        refs.entry(r.topic_id.clone()).or_default().push(r.text.clone());
    }
    Ok(refs)
}

/// Mean of per-record scalar scores for each system of one dataset.
fn aggregate_scalar(
    manifest: &DatasetManifest,
    scores: &BTreeMap<String, f64>,
) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in &manifest.records {
        if let Some(s) = scores.get(&r.record_id) {
            let e = sums.entry(r.system_id.clone()).or_insert((0.0, 0));
            e.0 += s;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(sys, (sum, n))| (sys, sum / n as f64))
        .collect()
}

/// Records of the two training datasets split into train and dev.
struct FoldData<'a> {
    train_records: Vec<&'a SummaryRecord>,
    dev_records: Vec<&'a SummaryRecord>,
    test: &'a DatasetBundle,
    train_bundles: Vec<&'a DatasetBundle>,
}

fn fold_data<'a>(
    bundles: &'a [DatasetBundle],
    fold: &FoldSpec,
) -> Result<FoldData<'a>> {
    let dev_ids: BTreeSet<&str> = fold.dev_record_ids.iter().map(String::as_str).collect();
    let test = bundles
        .iter()
        .find(|b| b.manifest.dataset_id == fold.test)
        .ok_or_else(|| Error::Config(format!("fold test dataset '{}' missing", fold.test)))?;
    let train_bundles: Vec<&DatasetBundle> = fold
        .train
        .iter()
        .map(|id| {
            bundles
                .iter()
                .find(|b| b.manifest.dataset_id == *id)
                .ok_or_else(|| Error::Config(format!("fold train dataset '{id}' missing")))
        })
        .collect::<Result<_>>()?;
    let mut train_records = Vec::new();
    let mut dev_records = Vec::new();
    for bundle in &train_bundles {
        for r in &bundle.manifest.records {
            if dev_ids.contains(r.record_id.as_str()) {
                dev_records.push(r);
            } else {
                train_records.push(r);
            }
        }
    }
    Ok(FoldData {
        train_records,
        dev_records,
        test,
        train_bundles,
    })
}

/// Gold means over dev records, keyed by `dataset/system`.
fn dev_gold_columns(dev_records: &[&SummaryRecord]) -> Result<BTreeMap<String, [f64; QUALITY_COUNT]>> {
    let mut sums: BTreeMap<String, ([f64; QUALITY_COUNT], usize)> = BTreeMap::new();
    for r in dev_records {
        let gold = r
            .gold
            .ok_or_else(|| Error::Validation(format!("dev record '{}' has no gold", r.record_id)))?;
        let e = sums
            .entry(format!("{}/{}", r.dataset_id, r.system_id))
            .or_insert(([0.0; QUALITY_COUNT], 0));
        for (s, v) in e.0.iter_mut().zip(gold.0.iter()) {
            *s += v;
        }
        e.1 += 1;
    }
    Ok(sums
        .into_iter()
        .map(|(key, (sum, n))| {
            let mut mean = [0.0; QUALITY_COUNT];
            for (m, s) in mean.iter_mut().zip(sum.iter()) {
                *m = s / n as f64;
            }
            (key, mean)
        })
        .collect())
}

/// Mean dev Spearman rho across the five qualities for predicted
/// per-record vectors.
fn dev_mean_rho(
    dev_records: &[&SummaryRecord],
    predictions: &BTreeMap<String, [f64; QUALITY_COUNT]>,
    dev_gold: &BTreeMap<String, [f64; QUALITY_COUNT]>,
) -> Result<f64> {
    let mut sums: BTreeMap<String, ([f64; QUALITY_COUNT], usize)> = BTreeMap::new();
    for r in dev_records {
        let Some(pred) = predictions.get(&r.record_id) else {
            continue;
        };
        let e = sums
            .entry(format!("{}/{}", r.dataset_id, r.system_id))
            .or_insert(([0.0; QUALITY_COUNT], 0));
        for (s, v) in e.0.iter_mut().zip(pred.iter()) {
            *s += v;
        }
        e.1 += 1;
    }
    let mut total = 0.0;
    for q in 0..QUALITY_COUNT {
        let keys: Vec<&String> = sums.keys().filter(|k| dev_gold.contains_key(*k)).collect();
        let xs: Vec<f64> = keys.iter().map(|k| sums[*k].0[q] / sums[*k].1 as f64).collect();
        let ys: Vec<f64> = keys.iter().map(|k| dev_gold[*k][q]).collect();
        total += spearman_rho(&xs, &ys)?;
    }
    Ok(total / QUALITY_COUNT as f64)
}

fn method_name(qe: &QeSection) -> String {
    let kind = match qe.encoder.kind {
        EncoderKind::PretrainedTransformer => "tx",
        EncoderKind::BigruAttention => "bigru-att",
    };
    let mode = match qe.encoder_mode {
        crate::encoders::EncodeMode::Trainable => "ft",
        crate::encoders::EncodeMode::Frozen => "fr",
    };
    format!("{kind}-{mode}-{}", qe.flavor)
}

/// Build the fold's encoder(s): fit the vocabulary on training texts,
/// initialize from the spec seed, write the checkpoint, and load it back
/// through the pretrained-identifier path.
fn build_encoders(
    qe: &QeSection,
    train_texts: &[&str],
    fold_dir: &Path,
    fold_seed: u64,
) -> Result<Vec<Encoder>> {
    let count = match qe.flavor {
        crate::heads::Flavor::S1 => QUALITY_COUNT,
        _ => 1,
    };
    let mut encoders = Vec::with_capacity(count);
    for i in 0..count {
        let mut spec = qe.encoder.clone();
        spec.seed = derive_seed(fold_seed, 23, i as u64);
        let encoder = match spec.kind {
            EncoderKind::PretrainedTransformer => {
                if spec.pretrained_id.is_none() {
                    let vocab = Vocab::fit_subwords(train_texts, qe.vocab_min_count)?;
                    let mut fresh = Encoder::Transformer(
                        crate::encoders::TransformerEncoder::init(&spec, vocab)?,
                    );
                    let dir = fold_dir.join(format!("pretrained/enc_{i}"));
                    save_checkpoint(&mut fresh, &dir)?;
                    spec.pretrained_id = Some(dir.display().to_string());
                }
                Encoder::from_spec(&spec, None)?
            }
            EncoderKind::BigruAttention => {
                let vocab = Vocab::fit_words(train_texts, qe.vocab_min_count)?;
                Encoder::from_spec(&spec, Some(vocab))?
            }
        };
        encoders.push(encoder);
    }
    Ok(encoders)
}

fn build_model(qe: &QeSection, encoders: Vec<Encoder>, seed: u64) -> Result<QeModel> {
    match qe.flavor {
        crate::heads::Flavor::S1 => QeModel::new_s1(encoders, seed),
        crate::heads::Flavor::M1 => Ok(QeModel::new_m1(
            encoders.into_iter().next().expect("one encoder"),
            seed,
        )),
        crate::heads::Flavor::M5 => Ok(QeModel::new_m5(
            encoders.into_iter().next().expect("one encoder"),
            seed,
        )),
    }
}

fn predict_all(
    model: &QeModel,
    records: &[&SummaryRecord],
) -> Result<BTreeMap<String, QualityPrediction>> {
    let mut out = BTreeMap::new();
    for r in records {
        out.insert(r.record_id.clone(), model.predict(&r.record_id, &r.text)?);
    }
    Ok(out)
}

/// Prediction file mirroring the corpus line-record format with q1..q5
/// filled by the clipped predictions.
pub fn write_predictions(
    manifest: &DatasetManifest,
    predictions: &BTreeMap<String, QualityPrediction>,
    path: &Path,
) -> Result<()> {
    let records: Vec<SummaryRecord> = manifest
        .records
        .iter()
        .filter_map(|r| {
            predictions.get(&r.record_id).map(|p| SummaryRecord {
                gold: Some(p.predicted),
                ..r.clone()
            })
        })
        .collect();
    save_corpus(&DatasetManifest::from_records(records)?, path)
}

fn run_qe_fold(
    qe: &QeSection,
    data: &FoldData<'_>,
    fold_dir: &Path,
    fold_seed: u64,
    fold_meta: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<Vec<ReportEntry>> {
    let train_texts: Vec<&str> = data.train_records.iter().map(|r| r.text.as_str()).collect();
    let train_samples: Vec<TrainSample> = data
        .train_records
        .iter()
        .map(|r| {
            let gold = r.gold.ok_or_else(|| {
                Error::Validation(format!("training record '{}' has no gold", r.record_id))
            })?;
            Ok(TrainSample {
                text: r.text.clone(),
                gold: gold.0,
            })
        })
        .collect::<Result<_>>()?;
    let encoders = build_encoders(qe, &train_texts, fold_dir, fold_seed)?;
    let head_seed = derive_seed(fold_seed, 29, 0);
    let base_model = build_model(qe, encoders, head_seed)?;
    let dev_gold = dev_gold_columns(&data.dev_records)?;
    let train_seed = derive_seed(fold_seed, 31, 0);

    let run_point = |point: &crate::runner::config::GridPoint| -> Result<(QeModel, f64)> {
        let mut model = base_model.clone();
        let cfg = qe.training_config(*point, train_seed);
        train_on(&mut model, &train_samples, &cfg)?;
        let mut dev_preds = BTreeMap::new();
        for r in &data.dev_records {
            let p = model.predict(&r.record_id, &r.text)?;
            dev_preds.insert(r.record_id.clone(), p.predicted.0);
        }
        let rho = dev_mean_rho(&data.dev_records, &dev_preds, &dev_gold)?;
        Ok((model, rho))
    };

    // Grid tuning on dev; exact ties go to the earliest grid point.
    let outcome = tune(&qe.grid, |point| run_point(point).map(|(_, rho)| rho))?;
    let (best_model, best_rho) = run_point(&outcome.config)?;
    fold_meta.insert(
        "qe".into(),
        serde_json::json!({
            "grid_index": outcome.index,
            "lr": outcome.config.lr,
            "epochs": outcome.config.epochs,
            "batch_size": outcome.config.batch_size,
            "dev_mean_rho": best_rho,
        }),
    );

    let mut model = best_model;
    let cfg = qe.training_config(outcome.config, train_seed);
    crate::heads::save_model(&mut model, &cfg, head_seed, &fold_dir.join("model"))?;

    let test_refs: Vec<&SummaryRecord> = data.test.manifest.records.iter().collect();
    let predictions = predict_all(&model, &test_refs)?;
    write_predictions(
        &data.test.manifest,
        &predictions,
        &fold_dir.join("predictions.jsonl"),
    )?;

    let clipped: BTreeMap<String, QualityVector> = predictions
        .iter()
        .map(|(id, p)| (id.clone(), p.predicted))
        .collect();
    let pred_table = aggregate_by_system(&data.test.manifest, &clipped)?;
    let gold_table = aggregate_by_system(&data.test.manifest, &data.test.manifest.gold_scores()?)?;
    save_system_table(&pred_table, &fold_dir.join("pred_systems.jsonl"))?;
    save_system_table(&gold_table, &fold_dir.join("gold_systems.jsonl"))?;

    let method = method_name(qe);
    let mut entries = Vec::new();
    for q in 0..QUALITY_COUNT {
        let (coefficients, n) = correlate_systems(&pred_table, &gold_table, q)?;
        entries.push(ReportEntry::new(
            data.test.manifest.dataset_id.clone(),
            q + 1,
            method.clone(),
            coefficients,
            n,
        )?);
    }
    Ok(entries)
}

fn rouge_scores_for(
    records: &[&SummaryRecord],
    bundles: &[&DatasetBundle],
    variant: RougeVariant,
) -> Result<BTreeMap<String, f64>> {
    let refs_of = |r: &SummaryRecord| -> Result<&Vec<String>> {
        let bundle = bundles
            .iter()
            .find(|b| b.manifest.dataset_id == r.dataset_id)
            .ok_or_else(|| Error::Config(format!("no bundle for dataset '{}'", r.dataset_id)))?;
        bundle.references.get(&r.topic_id).ok_or_else(|| {
            Error::Config(format!(
                "ROUGE needs references: none for dataset '{}' topic '{}'",
                r.dataset_id, r.topic_id
            ))
        })
    };
    let mut out = BTreeMap::new();
    for r in records {
        let refs = refs_of(r)?;
        out.insert(
            r.record_id.clone(),
            rouge_recall(&r.text, refs, variant)?.recall,
        );
    }
    Ok(out)
}

/// Composite dev gold table keyed `dataset/system`, for best-variant
/// selection.
fn dev_gold_table(dev_gold: &BTreeMap<String, [f64; QUALITY_COUNT]>) -> Result<SystemScoreTable> {
    let mut rows = BTreeMap::new();
    for (key, mean) in dev_gold {
        rows.insert(key.clone(), QualityVector::new(*mean)?);
    }
    Ok(SystemScoreTable {
        dataset_id: "dev".into(),
        rows,
        coverage: dev_gold.keys().map(|k| (k.clone(), 1)).collect(),
    })
}

/// Scalar scores per composite dev system.
fn dev_scalar_by_system(
    dev_records: &[&SummaryRecord],
    scores: &BTreeMap<String, f64>,
) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in dev_records {
        if let Some(s) = scores.get(&r.record_id) {
            let e = sums
                .entry(format!("{}/{}", r.dataset_id, r.system_id))
                .or_insert((0.0, 0));
            e.0 += s;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect()
}

fn correlate_test_scalar(
    test: &DatasetBundle,
    scores: &BTreeMap<String, f64>,
    quality: usize,
) -> Result<(Coefficients, usize)> {
    let pred = aggregate_scalar(&test.manifest, scores);
    let gold_table = aggregate_by_system(&test.manifest, &test.manifest.gold_scores()?)?;
    let gold_col: BTreeMap<String, f64> = gold_table
        .rows
        .iter()
        .map(|(sys, qv)| (sys.clone(), qv.get(quality)))
        .collect();
    correlate_scalar(&pred, &gold_col)
}

fn run_rouge_baseline(
    data: &FoldData<'_>,
    dev_gold: &SystemScoreTable,
    fold_meta: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<Vec<ReportEntry>> {
    // Score dev once per variant.
    let mut dev_scored: BTreeMap<RougeVariant, BTreeMap<String, f64>> = BTreeMap::new();
    for variant in RougeVariant::ALL {
        let by_record = rouge_scores_for(&data.dev_records, &data.train_bundles, variant)?;
        dev_scored.insert(variant, dev_scalar_by_system(&data.dev_records, &by_record));
    }
    let test_records: Vec<&SummaryRecord> = data.test.manifest.records.iter().collect();
    let mut test_cache: BTreeMap<RougeVariant, BTreeMap<String, f64>> = BTreeMap::new();
    let mut entries = Vec::new();
    let mut chosen = serde_json::Map::new();
    for q in 0..QUALITY_COUNT {
        let variant = select_best_rouge(&dev_scored, dev_gold, q)?;
        chosen.insert(format!("q{}", q + 1), serde_json::json!(variant.to_string()));
        if !test_cache.contains_key(&variant) {
            let scores = rouge_scores_for(&test_records, &[data.test], variant)?;
            test_cache.insert(variant, scores);
        }
        let (coefficients, n) = correlate_test_scalar(data.test, &test_cache[&variant], q)?;
        entries.push(ReportEntry::new(
            data.test.manifest.dataset_id.clone(),
            q + 1,
            "best-rouge",
            coefficients,
            n,
        )?);
    }
    fold_meta.insert("best_rouge_variants".into(), chosen.into());
    Ok(entries)
}

enum LmKind {
    Causal,
    Masked,
}

fn run_lm_baseline(
    kind: LmKind,
    data: &FoldData<'_>,
    baselines: &crate::runner::config::BaselineSection,
    fold_meta: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<Vec<ReportEntry>> {
    let train_texts: Vec<&str> = data.train_records.iter().map(|r| r.text.as_str()).collect();
    let (scorer, method): (Box<dyn TokenScorer>, &str) = match kind {
        LmKind::Causal => match &baselines.causal_adapter {
            Some(id) => (resolve_adapter(id)?, "lm-kworst-causal"),
            None => (
                Box::new(BigramLm::fit(&train_texts, 0.1)?),
                "lm-kworst-causal",
            ),
        },
        LmKind::Masked => match &baselines.masked_adapter {
            Some(id) => (resolve_adapter(id)?, "lm-kworst-masked"),
            None => (
                Box::new(MaskedBigramLm::fit(&train_texts, 0.1)?),
                "lm-kworst-masked",
            ),
        },
    };
    let mut k_grid: Vec<KWorstConfig> = baselines
        .k_grid
        .iter()
        .map(|k| KWorstConfig::K(*k))
        .collect();
    if baselines.k_all {
        k_grid.push(KWorstConfig::All);
    }

    // Perplexity as a quality predictor: higher perplexity means worse
    // text, so the predictor is -log2(perplexity).
    let score_records = |records: &[&SummaryRecord],
                         cfg: KWorstConfig|
     -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        for r in records {
            let probs = scorer.score(&r.record_id, &r.text)?;
            // The op itself rejects k > token count; the harness clamps.
            let clamped = match cfg {
                KWorstConfig::K(k) => KWorstConfig::K(k.min(probs.tokens.len())),
                KWorstConfig::All => KWorstConfig::All,
            };
            let pp = kworst_perplexity(&probs, clamped)?;
            out.insert(r.record_id.clone(), -pp.value.log2());
        }
        Ok(out)
    };

    let dev_gold = dev_gold_columns(&data.dev_records)?;
    let test_records: Vec<&SummaryRecord> = data.test.manifest.records.iter().collect();
    let mut entries = Vec::new();
    let mut chosen = serde_json::Map::new();
    // Dev scores per k are shared across qualities; compute once.
    let mut dev_by_k: Vec<BTreeMap<String, f64>> = Vec::with_capacity(k_grid.len());
    for cfg in &k_grid {
        dev_by_k.push(dev_scalar_by_system(
            &data.dev_records,
            &score_records(&data.dev_records, *cfg)?,
        ));
    }
    let mut test_cache: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();
    for q in 0..QUALITY_COUNT {
        let gold_col: BTreeMap<String, f64> = dev_gold
            .iter()
            .map(|(k, v)| (k.clone(), v[q]))
            .collect();
        let grid_indices: Vec<usize> = (0..k_grid.len()).collect();
        let outcome = tune(&grid_indices, |idx| {
            correlate_scalar(&dev_by_k[*idx], &gold_col).map(|(c, _)| c.rho)
        })?;
        let k_label = match k_grid[outcome.config] {
            KWorstConfig::K(k) => k.to_string(),
            KWorstConfig::All => "all".to_string(),
        };
        chosen.insert(format!("q{}", q + 1), serde_json::json!(k_label));
        if !test_cache.contains_key(&outcome.config) {
            test_cache.insert(
                outcome.config,
                score_records(&test_records, k_grid[outcome.config])?,
            );
        }
        let (coefficients, n) =
            correlate_test_scalar(data.test, &test_cache[&outcome.config], q)?;
        entries.push(ReportEntry::new(
            data.test.manifest.dataset_id.clone(),
            q + 1,
            method,
            coefficients,
            n,
        )?);
    }
    fold_meta.insert(format!("{method}_k"), chosen.into());
    Ok(entries)
}

fn run_nsp_baseline(
    data: &FoldData<'_>,
    baselines: &crate::runner::config::BaselineSection,
) -> Result<Vec<ReportEntry>> {
    let scorer = crate::baselines::OrdinalNspScorer::default();
    let mut scores = BTreeMap::new();
    for r in &data.test.manifest.records {
        let sentences = split_sentences(&r.text);
        if sentences.len() < 2 {
            // Sentence-level perplexity is undefined; the record simply
            // does not contribute to its system's mean.
            continue;
        }
        let mut pair_probs = Vec::with_capacity(sentences.len() - 1);
        for pair in sentences.windows(2) {
            pair_probs.push(crate::baselines::NspScorer::pair_probability(
                &scorer, &pair[0], &pair[1],
            )?);
        }
        let pp = next_sentence_perplexity(&pair_probs, sentences.len(), baselines.nsp_normalizer)?;
        scores.insert(r.record_id.clone(), -pp.value.log2());
    }
    let mut entries = Vec::new();
    for q in 0..QUALITY_COUNT {
        let (coefficients, n) = correlate_test_scalar(data.test, &scores, q)?;
        entries.push(ReportEntry::new(
            data.test.manifest.dataset_id.clone(),
            q + 1,
            "nsp-ppl",
            coefficients,
            n,
        )?);
    }
    Ok(entries)
}

/// Materialize the config's synthetic datasets (and validate any
/// path-backed ones) without running the experiment.
pub fn synthesize_only(config: &ExperimentConfig, out_dir: &Path, force: bool) -> Result<()> {
    config.validate()?;
    ensure_output_dir(out_dir, force)?;
    let mut hashes = BTreeMap::new();
    materialize_datasets(config, config.seed, out_dir, &mut hashes)?;
    Ok(())
}

/// Build a fresh model for standalone training on one corpus: the
/// vocabulary is fitted on that corpus, and transformer specs without a
/// pretrained identifier get fresh seeded weights directly.
pub fn standalone_model(
    qe: &QeSection,
    corpus: &DatasetManifest,
    seed: u64,
) -> Result<QeModel> {
    let texts: Vec<&str> = corpus.records.iter().map(|r| r.text.as_str()).collect();
    let count = match qe.flavor {
        crate::heads::Flavor::S1 => QUALITY_COUNT,
        _ => 1,
    };
    let mut encoders = Vec::with_capacity(count);
    for i in 0..count {
        let mut spec = qe.encoder.clone();
        spec.seed = derive_seed(seed, 23, i as u64);
        let encoder = match spec.kind {
            EncoderKind::PretrainedTransformer => match &spec.pretrained_id {
                Some(_) => Encoder::from_spec(&spec, None)?,
                None => {
                    let vocab = Vocab::fit_subwords(&texts, qe.vocab_min_count)?;
                    Encoder::Transformer(crate::encoders::TransformerEncoder::init(
                        &spec, vocab,
                    )?)
                }
            },
            EncoderKind::BigruAttention => {
                let vocab = Vocab::fit_words(&texts, qe.vocab_min_count)?;
                Encoder::from_spec(&spec, Some(vocab))?
            }
        };
        encoders.push(encoder);
    }
    build_model(qe, encoders, derive_seed(seed, 29, 0))
}

fn ensure_output_dir(out_dir: &Path, force: bool) -> Result<()> {
    if out_dir.exists() {
        let non_empty = std::fs::read_dir(out_dir)
            .map_err(|e| Error::io(out_dir, e))?
            .next()
            .is_some();
        if non_empty && !force {
            return Err(Error::Config(format!(
                "output directory {} is not empty; pass --force to overwrite",
                out_dir.display()
            )));
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    Ok(())
}

/// Execute the full experiment. Outputs are deterministic given the
/// config and seeds; rerunning with identical inputs reproduces
/// byte-identical metric files.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
    force: bool,
) -> Result<RunOutcome> {
    config.validate()?;
    ensure_output_dir(out_dir, force)?;
    let seed = seed_override.unwrap_or(config.seed);
    let mut manifest = RunManifest::begin(
        "run-experiment",
        seed,
        seed_override,
        serde_json::to_value(config)?,
    );
    manifest.write(out_dir)?;

    let fail = |manifest: &mut RunManifest, stage: &str, e: Error| -> Error {
        manifest.finish(RunStatus::Failed {
            stage: stage.into(),
            error: e.to_string(),
        });
        let _ = manifest.write(out_dir);
        e
    };

    let mut input_hashes = BTreeMap::new();
    let bundles = match materialize_datasets(config, seed, out_dir, &mut input_hashes) {
        Ok(b) => b,
        Err(e) => return Err(fail(&mut manifest, "materialize-datasets", e)),
    };
    manifest.input_hashes = input_hashes;
    manifest.write(out_dir)?;

    let manifests: Vec<DatasetManifest> = bundles.iter().map(|b| b.manifest.clone()).collect();
    let plan = match make_folds(&manifests, config.dev_fraction, derive_seed(seed, 3, 0)) {
        Ok(p) => p,
        Err(e) => return Err(fail(&mut manifest, "fold-plan", e)),
    };

    let mut fold_report_paths = Vec::new();
    let mut all_entries = Vec::new();
    for (fold_idx, fold) in plan.folds.iter().enumerate() {
        let fold_dir = out_dir.join(format!("fold_{fold_idx}"));
        let stage = format!("fold-{fold_idx}");
        let result = (|| -> Result<Vec<ReportEntry>> {
            std::fs::create_dir_all(&fold_dir).map_err(|e| Error::io(&fold_dir, e))?;
            let data = fold_data(&bundles, fold)?;
            let fold_seed = derive_seed(seed, 41, fold_idx as u64);
            let mut fold_meta = serde_json::Map::new();
            fold_meta.insert("test_dataset".into(), serde_json::json!(fold.test));
            let mut entries = Vec::new();
            if let Some(qe) = &config.qe {
                entries.extend(run_qe_fold(qe, &data, &fold_dir, fold_seed, &mut fold_meta)?);
            }
            let needs_dev_gold =
                config.baselines.rouge || config.baselines.lm_causal || config.baselines.lm_masked;
            if needs_dev_gold {
                let dev_gold = dev_gold_table(&dev_gold_columns(&data.dev_records)?)?;
                if config.baselines.rouge {
                    entries.extend(run_rouge_baseline(&data, &dev_gold, &mut fold_meta)?);
                }
                if config.baselines.lm_causal {
                    entries.extend(run_lm_baseline(
                        LmKind::Causal,
                        &data,
                        &config.baselines,
                        &mut fold_meta,
                    )?);
                }
                if config.baselines.lm_masked {
                    entries.extend(run_lm_baseline(
                        LmKind::Masked,
                        &data,
                        &config.baselines,
                        &mut fold_meta,
                    )?);
                }
            }
            if config.baselines.nsp {
                entries.extend(run_nsp_baseline(&data, &config.baselines)?);
            }
            let meta_path = fold_dir.join("fold_meta.json");
            std::fs::write(
                &meta_path,
                serde_json::to_string_pretty(&serde_json::Value::Object(fold_meta))?,
            )
            .map_err(|e| Error::io(&meta_path, e))?;
            let report = CorrelationReport { entries };
            write_report(&report, &fold_dir.join("report.jsonl"))?;
            Ok(report.entries)
        })();
        match result {
            Ok(entries) => {
                fold_report_paths.push(fold_dir.join("report.jsonl"));
                all_entries.extend(entries);
            }
            Err(e) => return Err(fail(&mut manifest, &stage, e)),
        }
    }

    let merged = CorrelationReport {
        entries: all_entries,
    };
    let report_path = out_dir.join("report.jsonl");
    let finish = (|| -> Result<()> {
        write_report(&merged, &report_path)?;
        let table_path = out_dir.join("report.txt");
        std::fs::write(&table_path, crate::eval::render_table(&merged))
            .map_err(|e| Error::io(&table_path, e))?;
        Ok(())
    })();
    if let Err(e) = finish {
        return Err(fail(&mut manifest, "write-report", e));
    }

    manifest.outputs = {
        let mut outputs: Vec<String> = fold_report_paths
            .iter()
            .map(|p| p.strip_prefix(out_dir).unwrap_or(p).display().to_string())
            .collect();
        outputs.push("report.jsonl".into());
        outputs.push("report.txt".into());
        outputs
    };
    manifest.finish(RunStatus::Completed);
    manifest.write(out_dir)?;

    Ok(RunOutcome {
        out_dir: out_dir.to_path_buf(),
        fold_report_paths,
        report_path,
        merged_report: merged,
    })
}
