//! Trained-model directories: a manifest (flavor, encoder specs,
//! training config, seed, content hash) plus encoder checkpoints and a
//! head-weights blob.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoders::checkpoint::{collect_values, install_values, parse_blob, weights_blob};
use crate::encoders::{load_checkpoint, save_checkpoint, Encoder, EncoderSpec};
use crate::error::{Error, Result};
use crate::heads::{AffineHead, Flavor, QeModel, TrainingConfig};
use crate::nn::VisitParams;

const MODEL_MANIFEST: &str = "model.json";
const HEADS_FILE: &str = "heads.bin";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub flavor: Flavor,
    pub encoder_specs: Vec<EncoderSpec>,
    pub cfg: TrainingConfig,
    pub seed: u64,
    /// Hash over the head blob and every encoder's weights hash.
    pub content_hash: String,
}

struct HeadsOnly<'a>(&'a mut QeModel);

impl VisitParams for HeadsOnly<'_> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn crate::nn::ParamVisit)) {
        self.0.visit_head_params(f);
    }
}

fn encoders_of(model: &QeModel) -> Vec<&Encoder> {
    match model {
        QeModel::S1 { pairs } => pairs.iter().map(|(e, _)| e).collect(),
        QeModel::M1 { encoder, .. } => vec![encoder],
        QeModel::M5 { encoder, .. } => vec![encoder],
    }
}

/// Save a model (trained or not) into `dir`.
pub fn save_model(
    model: &mut QeModel,
    cfg: &TrainingConfig,
    seed: u64,
    dir: &Path,
) -> Result<ModelManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut encoder_hashes = Vec::new();
    let encoder_specs: Vec<EncoderSpec> = encoders_of(model)
        .iter()
        .map(|e| e.spec().clone())
        .collect();
    // Clone out the encoders so checkpointing (which needs &mut for the
    // parameter walk) leaves the model untouched.
    for (i, encoder) in encoders_of(model).into_iter().enumerate() {
        let mut copy = encoder.clone();
        let hash = save_checkpoint(&mut copy, &dir.join(format!("encoder_{i}")))?;
        encoder_hashes.push(hash);
    }

    let head_blob = weights_blob(&collect_values(&mut HeadsOnly(model)));
    let heads_path = dir.join(HEADS_FILE);
    std::fs::File::create(&heads_path)
        .and_then(|mut f| f.write_all(&head_blob))
        .map_err(|e| Error::io(&heads_path, e))?;

    let mut hasher = Sha256::new();
    hasher.update(&head_blob);
    for h in &encoder_hashes {
        hasher.update(h.as_bytes());
    }
    let manifest = ModelManifest {
        format_version: 1,
        flavor: model.flavor(),
        encoder_specs,
        cfg: cfg.clone(),
        seed,
        content_hash: format!("{:x}", hasher.finalize()),
    };
    let manifest_path = dir.join(MODEL_MANIFEST);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}

/// Load a model directory back into a usable model.
pub fn load_model(dir: &Path) -> Result<(QeModel, ModelManifest)> {
    let manifest_path = dir.join(MODEL_MANIFEST);
    let text =
        std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: ModelManifest = serde_json::from_str(&text)?;
    if manifest.format_version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported model format version {}",
            manifest.format_version
        )));
    }
    let expected = match manifest.flavor {
        Flavor::S1 => 5,
        _ => 1,
    };
    if manifest.encoder_specs.len() != expected {
        return Err(Error::Checkpoint(format!(
            "flavor {} expects {expected} encoders, manifest lists {}",
            manifest.flavor,
            manifest.encoder_specs.len()
        )));
    }
    let mut encoders = Vec::new();
    for i in 0..manifest.encoder_specs.len() {
        encoders.push(load_checkpoint(&dir.join(format!("encoder_{i}")))?);
    }

    let mut model = match manifest.flavor {
        Flavor::S1 => QeModel::new_s1(encoders, manifest.seed)?,
        Flavor::M1 => {
            let mut rng = <rand_chacha::ChaCha12Rng as rand::SeedableRng>::seed_from_u64(
                manifest.seed,
            );
            QeModel::M1 {
                head: AffineHead::new(&mut rng, encoders[0].dim(), 5),
                encoder: encoders.into_iter().next().unwrap(),
            }
        }
        Flavor::M5 => QeModel::new_m5(encoders.into_iter().next().unwrap(), manifest.seed),
    };

    let heads_path = dir.join(HEADS_FILE);
    let mut blob = Vec::new();
    std::fs::File::open(&heads_path)
        .and_then(|mut f| f.read_to_end(&mut blob))
        .map_err(|e| Error::io(&heads_path, e))?;
    install_values(&mut HeadsOnly(&mut model), &parse_blob(&blob)?)?;
    Ok((model, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::vocab::Vocab;
    use crate::encoders::{EncoderKind, Pooling, TransformerEncoder};

    fn tiny_encoder(seed: u64) -> Encoder {
        let spec = EncoderSpec {
            kind: EncoderKind::PretrainedTransformer,
            d: 8,
            max_tokens: 16,
            layers: 1,
            n_heads: 2,
            hidden: 0,
            embed_dim: 0,
            att_dim: 0,
            pretrained_id: None,
            pooling: Pooling::ClsPooler,
            seed,
        };
        let vocab = Vocab::fit_subwords(&["the cat sat on the mat"], 1).unwrap();
        Encoder::Transformer(TransformerEncoder::init(&spec, vocab).unwrap())
    }

    fn cfg() -> TrainingConfig {
        TrainingConfig {
            lr: 0.01,
            epochs: 1,
            batch_size: 2,
            seed: 3,
            optimizer: "adam".into(),
            loss_weights: [1.0; 5],
            encoder_mode: Default::default(),
        }
    }

    #[test]
    fn model_directory_round_trips_predictions() {
        let dir = tempfile::tempdir().unwrap();
        for model in [
            QeModel::new_m1(tiny_encoder(1), 2),
            QeModel::new_m5(tiny_encoder(2), 3),
            QeModel::new_s1((0..5).map(|i| tiny_encoder(i)).collect(), 4).unwrap(),
        ] {
            let mut model = model;
            let sub = dir.path().join(format!("{}", model.flavor()));
            let manifest = save_model(&mut model, &cfg(), 7, &sub).unwrap();
            assert_eq!(manifest.flavor, model.flavor());
            let (loaded, loaded_manifest) = load_model(&sub).unwrap();
            assert_eq!(loaded_manifest.content_hash, manifest.content_hash);
            let a = model.predict_raw("the cat sat").unwrap();
            let b = loaded.predict_raw("the cat sat").unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn missing_directory_is_an_error() {
        assert!(load_model(Path::new("/nonexistent/model")).is_err());
    }
}
