//! Cross-dataset fold planning: train on two datasets, test on the third.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::DatasetManifest;
use crate::error::{Error, Result};

/// One fold: two training datasets, one test dataset, and the dev
/// record ids held out from the training records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub train: [String; 2],
    pub test: String,
    pub dev_record_ids: Vec<String>,
}

/// The full 3-fold rotation; every dataset is the test set exactly once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<FoldSpec>,
}

/// Build the 3-fold plan. Dev records are sampled from the training
/// records of each fold, stratified by (dataset, system) so every
/// contestant appears in dev; sampling is deterministic in `seed`.
pub fn make_folds(
    datasets: &[DatasetManifest],
    dev_fraction: f64,
    seed: u64,
) -> Result<FoldPlan> {
    if datasets.len() != 3 {
        return Err(Error::Config(format!(
            "the fold protocol needs exactly 3 datasets, got {}",
            datasets.len()
        )));
    }
    if !(dev_fraction > 0.0 && dev_fraction < 0.5) {
        return Err(Error::Config(format!(
            "dev_fraction {dev_fraction} outside (0, 0.5)"
        )));
    }
    let mut folds = Vec::with_capacity(3);
    for (fold_idx, test_ds) in datasets.iter().enumerate() {
        let train: Vec<&DatasetManifest> = datasets
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold_idx)
            .map(|(_, d)| d)
            .collect();
        let mut groups: BTreeMap<(String, String), Vec<String>> = BTreeMap::new();
        for ds in &train {
            for r in &ds.records {
                groups
                    .entry((r.dataset_id.clone(), r.system_id.clone()))
                    .or_default()
                    .push(r.record_id.clone());
            }
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(fold_idx as u64));
        let mut dev = Vec::new();
        for ids in groups.values_mut() {
            ids.sort();
            ids.shuffle(&mut rng);
            let take = ((dev_fraction * ids.len() as f64).round() as usize)
                .max(1)
                .min(ids.len());
            dev.extend(ids.iter().take(take).cloned());
        }
        dev.sort();
        folds.push(FoldSpec {
            train: [train[0].dataset_id.clone(), train[1].dataset_id.clone()],
            test: test_ds.dataset_id.clone(),
            dev_record_ids: dev,
        });
    }
    Ok(FoldPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{QualityVector, SummaryRecord};

    fn dataset(id: &str, n_systems: usize, n_topics: usize) -> DatasetManifest {
        let mut records = Vec::new();
        for s in 0..n_systems {
            for t in 0..n_topics {
                records.push(SummaryRecord {
                    record_id: format!("{id}-s{s}-t{t}"),
                    dataset_id: id.to_string(),
                    topic_id: format!("t{t}"),
                    system_id: format!("s{s}"),
                    text: "some text".into(),
                    gold: Some(QualityVector::new([3.0; 5]).unwrap()),
                });
            }
        }
        DatasetManifest::from_records(records).unwrap()
    }

    #[test]
    fn every_dataset_tests_exactly_once() {
        let ds = [dataset("A", 4, 5), dataset("B", 4, 5), dataset("C", 4, 5)];
        let plan = make_folds(&ds, 0.2, 7).unwrap();
        let mut tests: Vec<&str> = plan.folds.iter().map(|f| f.test.as_str()).collect();
        tests.sort();
        assert_eq!(tests, vec!["A", "B", "C"]);
        for fold in &plan.folds {
            assert!(!fold.train.contains(&fold.test));
        }
    }

    #[test]
    fn dev_cardinality_tracks_the_fraction() {
        // 2 train datasets x 10 systems x 50 topics = 1000 train records;
        // 0.1 puts 5 of each (dataset, system) group's 50 records in dev.
        let ds = [
            dataset("A", 10, 50),
            dataset("B", 10, 50),
            dataset("C", 10, 50),
        ];
        let plan = make_folds(&ds, 0.1, 7).unwrap();
        assert_eq!(plan.folds[0].dev_record_ids.len(), 100);
    }

    #[test]
    fn every_system_appears_in_dev() {
        let ds = [dataset("A", 6, 3), dataset("B", 6, 3), dataset("C", 6, 3)];
        let plan = make_folds(&ds, 0.2, 3).unwrap();
        for fold in &plan.folds {
            for train_id in &fold.train {
                for s in 0..6 {
                    let prefix = format!("{train_id}-s{s}-");
                    assert!(
                        fold.dev_record_ids.iter().any(|id| id.starts_with(&prefix)),
                        "system s{s} of {train_id} missing from dev"
                    );
                }
            }
        }
    }

    #[test]
    fn dev_records_come_from_training_datasets() {
        let ds = [dataset("A", 4, 4), dataset("B", 4, 4), dataset("C", 4, 4)];
        let plan = make_folds(&ds, 0.25, 5).unwrap();
        for fold in &plan.folds {
            for id in &fold.dev_record_ids {
                assert!(
                    fold.train.iter().any(|t| id.starts_with(t.as_str())),
                    "dev record {id} not from a training dataset"
                );
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_plans() {
        let ds = [dataset("A", 5, 6), dataset("B", 5, 6), dataset("C", 5, 6)];
        assert_eq!(
            make_folds(&ds, 0.15, 42).unwrap(),
            make_folds(&ds, 0.15, 42).unwrap()
        );
        assert_ne!(
            make_folds(&ds, 0.15, 42).unwrap(),
            make_folds(&ds, 0.15, 43).unwrap()
        );
    }

    #[test]
    fn wrong_dataset_count_is_an_error() {
        let ds = [dataset("A", 3, 3), dataset("B", 3, 3)];
        assert!(make_folds(&ds, 0.2, 1).is_err());
    }

    #[test]
    fn dev_fraction_bounds_enforced() {
        let ds = [dataset("A", 3, 3), dataset("B", 3, 3), dataset("C", 3, 3)];
        assert!(make_folds(&ds, 0.0, 1).is_err());
        assert!(make_folds(&ds, 0.5, 1).is_err());
    }
}
