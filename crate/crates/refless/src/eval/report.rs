//! Correlation report files and the consolidated results table.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Coefficients;

/// One (dataset, quality, method) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub dataset_id: String,
    /// 1-based quality index, matching the q1..q5 field names.
    pub quality: usize,
    pub method: String,
    pub rho: f64,
    pub tau: f64,
    pub r: f64,
    pub n_systems: usize,
}

impl ReportEntry {
    pub fn new(
        dataset_id: impl Into<String>,
        quality: usize,
        method: impl Into<String>,
        coefficients: Coefficients,
        n_systems: usize,
    ) -> Result<Self> {
        if !(1..=5).contains(&quality) {
            return Err(Error::Validation(format!("quality index {quality} outside 1..=5")));
        }
        if n_systems < 3 {
            return Err(Error::Validation(format!(
                "reported coefficients need at least 3 systems, got {n_systems}"
            )));
        }
        for (name, v) in [
            ("rho", coefficients.rho),
            ("tau", coefficients.tau),
            ("r", coefficients.r),
        ] {
            if !v.is_finite() || v.abs() > 1.0 + 1e-9 {
                return Err(Error::Validation(format!("{name} = {v} outside [-1, 1]")));
            }
        }
        Ok(ReportEntry {
            dataset_id: dataset_id.into(),
            quality,
            method: method.into(),
            rho: coefficients.rho.clamp(-1.0, 1.0),
            tau: coefficients.tau.clamp(-1.0, 1.0),
            r: coefficients.r.clamp(-1.0, 1.0),
            n_systems,
        })
    }
}

/// Spearman/Kendall/Pearson coefficients per quality per dataset per
/// method.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub entries: Vec<ReportEntry>,
}

impl CorrelationReport {
    pub fn merge(reports: &[CorrelationReport]) -> CorrelationReport {
        CorrelationReport {
            entries: reports.iter().flat_map(|r| r.entries.clone()).collect(),
        }
    }
}

/// Write one line-record per entry, in a fixed sort order so identical
/// reports are byte-identical.
pub fn write_report(report: &CorrelationReport, path: &Path) -> Result<()> {
    let mut entries = report.entries.clone();
    entries.sort_by(|a, b| {
        (&a.dataset_id, a.quality, &a.method).cmp(&(&b.dataset_id, b.quality, &b.method))
    });
    let mut out = Vec::new();
    for entry in &entries {
        let line = serde_json::to_string(entry)?;
        out.extend_from_slice(line.as_bytes());
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<CorrelationReport> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ReportEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        entries.push(entry);
    }
    Ok(CorrelationReport { entries })
}

/// Three-decimal coefficient formatting used across report rendering.
pub fn format_coefficient(v: f64) -> String {
    format!("{v:.3}")
}

const QUALITY_TITLES: [&str; 5] = [
    "Q1 Grammaticality",
    "Q2 Non-redundancy",
    "Q3 Referential clarity",
    "Q4 Focus",
    "Q5 Structure & coherence",
];

/// Render the consolidated human-readable table: one block per quality,
/// methods as rows, datasets as (rho, tau, r) column groups. The best
/// value per (dataset, quality, coefficient) is marked `**bold**`.
pub fn render_table(report: &CorrelationReport) -> String {
    let datasets: Vec<String> = report
        .entries
        .iter()
        .map(|e| e.dataset_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let methods: Vec<String> = report
        .entries
        .iter()
        .map(|e| e.method.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let lookup = |dataset: &str, quality: usize, method: &str| {
        report.entries.iter().find(|e| {
            e.dataset_id == dataset && e.quality == quality && e.method == method
        })
    };
    let method_width = methods.iter().map(|m| m.len()).max().unwrap_or(6).max(6);
    let col_width = 10usize;

    let mut out = String::new();
    for quality in 1..=5 {
        let present = report.entries.iter().any(|e| e.quality == quality);
        if !present {
            continue;
        }
        out.push_str(&format!("{}\n", QUALITY_TITLES[quality - 1]));
        out.push_str(&format!("{:<method_width$}", "method"));
        for dataset in &datasets {
            for coef in ["rho", "tau", "r"] {
                out.push_str(&format!("{:>col_width$}", format!("{dataset}:{coef}")));
            }
        }
        out.push('\n');

        // Column maxima decide the bold marks.
        let mut maxima: Vec<[Option<f64>; 3]> = vec![[None; 3]; datasets.len()];
        for (di, dataset) in datasets.iter().enumerate() {
            for method in &methods {
                if let Some(e) = lookup(dataset, quality, method) {
                    for (ci, v) in [e.rho, e.tau, e.r].into_iter().enumerate() {
                        maxima[di][ci] =
                            Some(maxima[di][ci].map_or(v, |m: f64| m.max(v)));
                    }
                }
            }
        }
        for method in &methods {
            let mut row = format!("{method:<method_width$}");
            let mut any = false;
            for (di, dataset) in datasets.iter().enumerate() {
                match lookup(dataset, quality, method) {
                    Some(e) => {
                        any = true;
                        for (ci, v) in [e.rho, e.tau, e.r].into_iter().enumerate() {
                            let text = format_coefficient(v);
                            let is_best = maxima[di][ci]
                                .map(|m| format_coefficient(m) == text)
                                .unwrap_or(false);
                            let cell = if is_best { format!("**{text}**") } else { text };
                            row.push_str(&format!("{cell:>col_width$}"));
                        }
                    }
                    None => {
                        for _ in 0..3 {
                            row.push_str(&format!("{:>col_width$}", "-"));
                        }
                    }
                }
            }
            if any {
                out.push_str(&row);
                out.push('\n');
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(dataset: &str, quality: usize, method: &str, rho: f64, tau: f64, r: f64) -> ReportEntry {
        ReportEntry::new(dataset, quality, method, Coefficients { rho, tau, r }, 32).unwrap()
    }

    #[test]
    fn entry_rejects_bad_coefficients() {
        assert!(ReportEntry::new(
            "d",
            1,
            "m",
            Coefficients {
                rho: 1.2,
                tau: 0.0,
                r: 0.0
            },
            3
        )
        .is_err());
        assert!(ReportEntry::new(
            "d",
            1,
            "m",
            Coefficients {
                rho: 0.0,
                tau: 0.0,
                r: 0.0
            },
            2
        )
        .is_err());
        assert!(ReportEntry::new(
            "d",
            0,
            "m",
            Coefficients {
                rho: 0.0,
                tau: 0.0,
                r: 0.0
            },
            3
        )
        .is_err());
    }

    #[test]
    fn report_round_trips_through_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.jsonl");
        let report = CorrelationReport {
            entries: vec![
                entry("D1", 3, "alpha", 0.913, 0.759, 0.796),
                entry("D1", 3, "beta", 0.889, 0.714, 0.761),
            ],
        };
        write_report(&report, &path).unwrap();
        let loaded = read_report(&path).unwrap();
        assert_eq!(loaded, report);
        // Repeat write is byte-identical.
        let path2 = dir.path().join("again.jsonl");
        write_report(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn three_decimal_fixture_values_round_trip_exactly() {
        // Published three-decimal coefficients must survive
        // format -> parse -> format unchanged.
        for v in [0.913, -0.138, 0.033, 0.5, -0.486, 0.796] {
            let text = format_coefficient(v);
            let parsed: f64 = text.parse().unwrap();
            assert_eq!(format_coefficient(parsed), text);
            assert_eq!(parsed, v);
        }
    }

    #[test]
    fn best_method_is_bolded() {
        let report = CorrelationReport {
            entries: vec![
                entry("D1", 3, "alpha", 0.913, 0.759, 0.796),
                entry("D1", 3, "beta", 0.889, 0.714, 0.761),
            ],
        };
        let table = render_table(&report);
        assert!(table.contains("**0.913**"), "{table}");
        assert!(table.contains("0.889") && !table.contains("**0.889**"), "{table}");
    }

    #[test]
    fn dominant_method_is_bolded_everywhere() {
        let report = CorrelationReport {
            entries: vec![
                entry("D1", 1, "good", 0.9, 0.8, 0.7),
                entry("D1", 1, "bad", 0.1, 0.0, -0.2),
                entry("D2", 1, "good", 0.8, 0.7, 0.6),
                entry("D2", 1, "bad", 0.2, 0.1, 0.0),
            ],
        };
        let table = render_table(&report);
        for v in ["0.900", "0.800", "0.700", "0.600"] {
            assert!(table.contains(&format!("**{v}**")), "{v} not bolded:\n{table}");
        }
    }
}
