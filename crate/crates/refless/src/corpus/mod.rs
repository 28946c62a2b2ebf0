//! Data model and ingestion for summary corpora.
//!
//! A corpus file is UTF-8 with one record per line, each line a flat JSON
//! object with keys `record_id`, `dataset_id`, `topic_id`, `system_id`,
//! `text` and optional `q1`..`q5`. The writer emits keys in exactly that
//! order so golden files are byte-stable.
//!
//! DUC-style inputs are expected to be converted into this layout before
//! ingestion: the shared-task peer code becomes `system_id`, the docset
//! (question cluster) id becomes `topic_id`, and the five linguistic
//! quality answers become `q1`..`q5`. No converter for the original
//! SGML-era layout ships here because that data is license-restricted.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize_whitespace;

pub const QUALITY_COUNT: usize = 5;

/// Human-readable names of the five linguistic qualities, indexed 0..=4.
pub const QUALITY_NAMES: [&str; QUALITY_COUNT] = [
    "grammaticality",
    "non-redundancy",
    "referential-clarity",
    "focus",
    "structure-coherence",
];

/// The five quality scores Q1..Q5, each on the 1–5 scale.
///
/// Gold vectors from human annotation carry integer values; predicted
/// vectors carry reals clipped into the same range. The constructor
/// rejects anything outside `[1, 5]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityVector(pub [f64; QUALITY_COUNT]);

impl QualityVector {
    pub fn new(values: [f64; QUALITY_COUNT]) -> Result<Self> {
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 1.0 || *v > 5.0 {
                return Err(Error::Validation(format!(
                    "q{} = {} outside the [1, 5] scale",
                    i + 1,
                    v
                )));
            }
        }
        Ok(QualityVector(values))
    }

    /// Clip raw reals into the reporting range and wrap them.
    pub fn from_raw_clipped(raw: [f64; QUALITY_COUNT]) -> Self {
        let mut clipped = [0.0; QUALITY_COUNT];
        for (c, r) in clipped.iter_mut().zip(raw.iter()) {
            *c = r.clamp(1.0, 5.0);
        }
        QualityVector(clipped)
    }

    pub fn get(&self, quality: usize) -> f64 {
        self.0[quality]
    }
}

/// One peer summary with its dataset/topic/system identity and an
/// optional gold quality vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub record_id: String,
    pub dataset_id: String,
    pub topic_id: String,
    pub system_id: String,
    pub text: String,
    pub gold: Option<QualityVector>,
}

/// Serialization shape of one corpus line. Field order here is the
/// on-disk key order.
#[derive(Debug, Serialize, Deserialize)]
struct LineRecord {
    record_id: String,
    dataset_id: String,
    topic_id: String,
    system_id: String,
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    q1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q5: Option<f64>,
}

impl From<&SummaryRecord> for LineRecord {
    fn from(r: &SummaryRecord) -> Self {
        let q = r.gold.map(|g| g.0);
        LineRecord {
            record_id: r.record_id.clone(),
            dataset_id: r.dataset_id.clone(),
            topic_id: r.topic_id.clone(),
            system_id: r.system_id.clone(),
            text: r.text.clone(),
            q1: q.map(|q| q[0]),
            q2: q.map(|q| q[1]),
            q3: q.map(|q| q[2]),
            q4: q.map(|q| q[3]),
            q5: q.map(|q| q[4]),
        }
    }
}

impl LineRecord {
    fn into_record(self, line: usize) -> Result<SummaryRecord> {
        let qs = [self.q1, self.q2, self.q3, self.q4, self.q5];
        let present = qs.iter().filter(|q| q.is_some()).count();
        let gold = match present {
            0 => None,
            QUALITY_COUNT => {
                let values = [
                    self.q1.unwrap(),
                    self.q2.unwrap(),
                    self.q3.unwrap(),
                    self.q4.unwrap(),
                    self.q5.unwrap(),
                ];
                Some(QualityVector::new(values).map_err(|e| {
                    Error::Validation(format!("line {line}, record '{}': {e}", self.record_id))
                })?)
            }
            _ => {
                let missing: Vec<String> = qs
                    .iter()
                    .enumerate()
                    .filter(|(_, q)| q.is_none())
                    .map(|(i, _)| format!("q{}", i + 1))
                    .collect();
                return Err(Error::Validation(format!(
                    "line {line}, record '{}': incomplete gold vector (missing {})",
                    self.record_id,
                    missing.join(", ")
                )));
            }
        };
        Ok(SummaryRecord {
            record_id: self.record_id,
            dataset_id: self.dataset_id,
            topic_id: self.topic_id,
            system_id: self.system_id,
            text: self.text,
            gold,
        })
    }
}

/// A dataset: its identity, topic/system counts and records in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub n_topics: usize,
    pub n_systems: usize,
    pub records: Vec<SummaryRecord>,
}

impl DatasetManifest {
    /// Build a manifest from records, deriving topic/system counts and
    /// checking all invariants.
    pub fn from_records(records: Vec<SummaryRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput("dataset has no records".into()));
        }
        let dataset_id = records[0].dataset_id.clone();
        let mut topics = BTreeSet::new();
        let mut systems = BTreeSet::new();
        let mut triples = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for r in &records {
            if r.dataset_id != dataset_id {
                return Err(Error::Validation(format!(
                    "record '{}' has dataset_id '{}', expected '{}'",
                    r.record_id, r.dataset_id, dataset_id
                )));
            }
            if normalize_whitespace(&r.text).is_empty() {
                return Err(Error::Validation(format!(
                    "record '{}' has empty text",
                    r.record_id
                )));
            }
            if !ids.insert(r.record_id.clone()) {
                return Err(Error::Validation(format!(
                    "duplicate record_id '{}'",
                    r.record_id
                )));
            }
            if !triples.insert((r.topic_id.clone(), r.system_id.clone())) {
                return Err(Error::Validation(format!(
                    "duplicate (dataset, topic, system) triple ('{}', '{}', '{}')",
                    r.dataset_id, r.topic_id, r.system_id
                )));
            }
            topics.insert(r.topic_id.clone());
            systems.insert(r.system_id.clone());
        }
        Ok(DatasetManifest {
            dataset_id,
            n_topics: topics.len(),
            n_systems: systems.len(),
            records,
        })
    }

    pub fn system_ids(&self) -> BTreeSet<String> {
        self.records.iter().map(|r| r.system_id.clone()).collect()
    }

    pub fn record(&self, record_id: &str) -> Option<&SummaryRecord> {
        self.records.iter().find(|r| r.record_id == record_id)
    }

    /// Gold vectors keyed by record id; errors if any record lacks one.
    pub fn gold_scores(&self) -> Result<BTreeMap<String, QualityVector>> {
        let mut map = BTreeMap::new();
        for r in &self.records {
            let gold = r.gold.ok_or_else(|| {
                Error::Validation(format!("record '{}' is missing a gold vector", r.record_id))
            })?;
            map.insert(r.record_id.clone(), gold);
        }
        Ok(map)
    }
}

/// Per-system mean quality vectors plus how many summaries each mean
/// covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemScoreTable {
    pub dataset_id: String,
    pub rows: BTreeMap<String, QualityVector>,
    pub coverage: BTreeMap<String, usize>,
}

impl SystemScoreTable {
    pub fn column(&self, quality: usize) -> Vec<(String, f64)> {
        self.rows
            .iter()
            .map(|(sys, qv)| (sys.clone(), qv.get(quality)))
            .collect()
    }
}

/// Load a corpus file, validating every invariant. Records keep input
/// order.
pub fn load_corpus(path: &Path) -> Result<DatasetManifest> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LineRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        records.push(parsed.into_record(line_no)?);
    }
    DatasetManifest::from_records(records)
}

/// Write a corpus file with byte-stable key order, one record per line.
pub fn save_corpus(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for r in &manifest.records {
        let line = serde_json::to_string(&LineRecord::from(r))?;
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Component-wise arithmetic mean of per-summary vectors for each system.
/// Systems with no scored records are omitted.
pub fn aggregate_by_system(
    manifest: &DatasetManifest,
    scores: &BTreeMap<String, QualityVector>,
) -> Result<SystemScoreTable> {
    for record_id in scores.keys() {
        if manifest.record(record_id).is_none() {
            return Err(Error::UnknownRecord(record_id.clone()));
        }
    }
    let mut sums: BTreeMap<String, [f64; QUALITY_COUNT]> = BTreeMap::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &manifest.records {
        if let Some(qv) = scores.get(&r.record_id) {
            let sum = sums.entry(r.system_id.clone()).or_insert([0.0; QUALITY_COUNT]);
            for (s, v) in sum.iter_mut().zip(qv.0.iter()) {
                *s += v;
            }
            *counts.entry(r.system_id.clone()).or_insert(0) += 1;
        }
    }
    let mut rows = BTreeMap::new();
    for (system, sum) in &sums {
        let n = counts[system] as f64;
        let mut mean = [0.0; QUALITY_COUNT];
        for (m, s) in mean.iter_mut().zip(sum.iter()) {
            *m = s / n;
        }
        rows.insert(system.clone(), QualityVector::new(mean)?);
    }
    Ok(SystemScoreTable {
        dataset_id: manifest.dataset_id.clone(),
        rows,
        coverage: counts,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SystemTableLine {
    dataset_id: String,
    system_id: String,
    n: usize,
    q1: f64,
    q2: f64,
    q3: f64,
    q4: f64,
    q5: f64,
}

/// Write a system score table, one line per system in id order.
pub fn save_system_table(table: &SystemScoreTable, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    for (system_id, qv) in &table.rows {
        let line = serde_json::to_string(&SystemTableLine {
            dataset_id: table.dataset_id.clone(),
            system_id: system_id.clone(),
            n: table.coverage.get(system_id).copied().unwrap_or(0),
            q1: qv.0[0],
            q2: qv.0[1],
            q3: qv.0[2],
            q4: qv.0[3],
            q5: qv.0[4],
        })?;
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_system_table(path: &Path) -> Result<SystemScoreTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut rows = BTreeMap::new();
    let mut coverage = BTreeMap::new();
    let mut dataset_id: Option<String> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SystemTableLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        match &dataset_id {
            None => dataset_id = Some(parsed.dataset_id.clone()),
            Some(id) if *id != parsed.dataset_id => {
                return Err(Error::Validation(format!(
                    "mixed dataset ids in system table: '{id}' and '{}'",
                    parsed.dataset_id
                )))
            }
            _ => {}
        }
        rows.insert(
            parsed.system_id.clone(),
            QualityVector::new([parsed.q1, parsed.q2, parsed.q3, parsed.q4, parsed.q5])?,
        );
        coverage.insert(parsed.system_id, parsed.n);
    }
    Ok(SystemScoreTable {
        dataset_id: dataset_id
            .ok_or_else(|| Error::EmptyInput("empty system table file".into()))?,
        rows,
        coverage,
    })
}

/// Per-quality mean and population standard deviation over the
/// per-system gold means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dataset_id: String,
    pub mean: [f64; QUALITY_COUNT],
    pub std: [f64; QUALITY_COUNT],
    pub n_systems: usize,
}

/// Statistics over the per-system gold means. Every record must carry a
/// gold vector.
pub fn corpus_stats(manifest: &DatasetManifest) -> Result<CorpusStats> {
    let gold = manifest.gold_scores()?;
    let table = aggregate_by_system(manifest, &gold)?;
    let n = table.rows.len();
    if n == 0 {
        return Err(Error::EmptyInput("no systems to aggregate".into()));
    }
    let mut mean = [0.0; QUALITY_COUNT];
    for qv in table.rows.values() {
        for (m, v) in mean.iter_mut().zip(qv.0.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = [0.0; QUALITY_COUNT];
    for qv in table.rows.values() {
        for ((v, x), m) in var.iter_mut().zip(qv.0.iter()).zip(mean.iter()) {
            let d = x - m;
            *v += d * d;
        }
    }
    let mut std = [0.0; QUALITY_COUNT];
    for (s, v) in std.iter_mut().zip(var.iter()) {
        *s = (v / n as f64).sqrt();
    }
    Ok(CorpusStats {
        dataset_id: manifest.dataset_id.clone(),
        mean,
        std,
        n_systems: n,
    })
}
