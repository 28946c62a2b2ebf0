//! The declarative experiment configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::NormalizerMode;
use crate::corpus::synth::SystemProfile;
use crate::encoders::{EncodeMode, EncoderSpec};
use crate::error::{Error, Result};
use crate::heads::{Flavor, TrainingConfig};

/// One dataset: either an existing corpus file or a synthetic spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSource {
    pub id: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Reference summaries for ROUGE (one or more records per topic).
    /// Synthetic datasets generate their own from the clean base texts.
    #[serde(default)]
    pub references: Option<PathBuf>,
    #[serde(default)]
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSection {
    pub n_topics: usize,
    pub n_systems: usize,
    #[serde(default = "default_sentences")]
    pub sentences_per_text: usize,
    /// Explicit per-system intensities; omitted means evenly spaced
    /// levels independently permuted per channel.
    #[serde(default)]
    pub systems: Option<Vec<SystemProfile>>,
    #[serde(default = "default_noise_cap")]
    pub noise_cap: f64,
}

fn default_sentences() -> usize {
    8
}

fn default_noise_cap() -> f64 {
    0.25
}

/// One point of the training grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QeSection {
    pub flavor: Flavor,
    pub encoder: EncoderSpec,
    pub grid: Vec<GridPoint>,
    #[serde(default)]
    pub encoder_mode: EncodeMode,
    #[serde(default = "default_weights")]
    pub loss_weights: [f64; 5],
    /// Vocabulary frequency cutoff when fitting on training folds.
    #[serde(default = "default_min_count")]
    pub vocab_min_count: usize,
}

fn default_weights() -> [f64; 5] {
    [1.0; 5]
}

fn default_min_count() -> usize {
    2
}

impl QeSection {
    pub fn training_config(&self, point: GridPoint, seed: u64) -> TrainingConfig {
        TrainingConfig {
            lr: point.lr,
            epochs: point.epochs,
            batch_size: point.batch_size,
            seed,
            optimizer: "adam".into(),
            loss_weights: self.loss_weights,
            encoder_mode: self.encoder_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSection {
    #[serde(default)]
    pub rouge: bool,
    #[serde(default)]
    pub lm_causal: bool,
    #[serde(default)]
    pub lm_masked: bool,
    #[serde(default)]
    pub nsp: bool,
    /// Finite k values for the k-worst grid; `ALL` is appended when
    /// `k_all` is set.
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_true")]
    pub k_all: bool,
    #[serde(default)]
    pub nsp_normalizer: NormalizerMode,
    /// Adapter ids overriding the built-in fold-fitted bigram scorers.
    #[serde(default)]
    pub causal_adapter: Option<String>,
    #[serde(default)]
    pub masked_adapter: Option<String>,
}

fn default_k_grid() -> Vec<usize> {
    vec![5, 10, 15, 20]
}

fn default_true() -> bool {
    true
}

impl Default for BaselineSection {
    fn default() -> Self {
        BaselineSection {
            rouge: false,
            lm_causal: false,
            lm_masked: false,
            nsp: false,
            k_grid: default_k_grid(),
            k_all: true,
            nsp_normalizer: NormalizerMode::default(),
            causal_adapter: None,
            masked_adapter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
    pub datasets: Vec<DatasetSource>,
    #[serde(default)]
    pub qe: Option<QeSection>,
    #[serde(default)]
    pub baselines: BaselineSection,
}

fn default_dev_fraction() -> f64 {
    0.1
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("cannot parse {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.datasets.len() != 3 {
            return Err(Error::Config(format!(
                "the fold protocol needs exactly 3 datasets, config lists {}",
                self.datasets.len()
            )));
        }
        for ds in &self.datasets {
            match (&ds.path, &ds.synth) {
                (Some(_), Some(_)) => {
                    return Err(Error::Config(format!(
                        "dataset '{}' sets both path and synth",
                        ds.id
                    )))
                }
                (None, None) => {
                    return Err(Error::Config(format!(
                        "dataset '{}' needs either path or synth",
                        ds.id
                    )))
                }
                _ => {}
            }
        }
        if let Some(qe) = &self.qe {
            if qe.grid.is_empty() {
                return Err(Error::Config("qe grid is empty".into()));
            }
        }
        if self.qe.is_none()
            && !(self.baselines.rouge
                || self.baselines.lm_causal
                || self.baselines.lm_masked
                || self.baselines.nsp)
        {
            return Err(Error::Config(
                "config enables neither the qe model nor any baseline".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{EncoderKind, Pooling};

    fn minimal_toml() -> String {
        r#"
seed = 42
dev_fraction = 0.2

[[datasets]]
id = "A"
[datasets.synth]
n_topics = 4
n_systems = 5

[[datasets]]
id = "B"
[datasets.synth]
n_topics = 4
n_systems = 5

[[datasets]]
id = "C"
[datasets.synth]
n_topics = 4
n_systems = 5

[qe]
flavor = "m-1"
grid = [{ lr = 0.01, epochs = 2, batch_size = 8 }]

[qe.encoder]
kind = "pretrained-transformer"
d = 16
max_tokens = 48
layers = 1
n_heads = 2
seed = 7

[baselines]
rouge = true
nsp = true
"#
        .to_string()
    }

    #[test]
    fn toml_round_trip() {
        let config: ExperimentConfig = toml::from_str(&minimal_toml()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.datasets.len(), 3);
        let qe = config.qe.as_ref().unwrap();
        assert_eq!(qe.flavor, Flavor::M1);
        assert_eq!(qe.encoder.kind, EncoderKind::PretrainedTransformer);
        assert_eq!(qe.encoder.pooling, Pooling::ClsPooler);
        assert!(config.baselines.rouge);
        assert!(!config.baselines.lm_causal);
        assert_eq!(config.baselines.k_grid, vec![5, 10, 15, 20]);
        assert!(config.baselines.k_all);
    }

    #[test]
    fn wrong_dataset_count_is_rejected() {
        let mut config: ExperimentConfig = toml::from_str(&minimal_toml()).unwrap();
        config.datasets.pop();
        assert!(config.validate().is_err());
    }

    #[test]
    fn dataset_needs_exactly_one_source() {
        let mut config: ExperimentConfig = toml::from_str(&minimal_toml()).unwrap();
        config.datasets[0].path = Some("/tmp/x.jsonl".into());
        assert!(config.validate().is_err());
        config.datasets[0].path = None;
        config.datasets[0].synth = None;
        assert!(config.validate().is_err());
    }

    #[test]
    fn nothing_enabled_is_rejected() {
        let mut config: ExperimentConfig = toml::from_str(&minimal_toml()).unwrap();
        config.qe = None;
        config.baselines = BaselineSection::default();
        assert!(config.validate().is_err());
    }
}
