//! The training loop: seeded shuffling, mini-batch gradients fanned out
//! over worker chunks, Adam updates, per-epoch loss logging.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{DatasetManifest, QUALITY_COUNT};
use crate::encoders::EncodeMode;
use crate::error::{Error, Result};
use crate::heads::{combined_loss, loss_grad, Flavor, LossWeights, QeModel};
use crate::nn::{adam_step_all, add_grads, export_grads, zero_grads, Adam};

/// Hyper-parameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Optimizer family; adaptive gradient descent ("adam") is the only
    /// one built in.
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default = "default_weights")]
    pub loss_weights: LossWeights,
    #[serde(default)]
    pub encoder_mode: EncodeMode,
}

fn default_optimizer() -> String {
    "adam".to_string()
}

fn default_weights() -> LossWeights {
    [1.0; QUALITY_COUNT]
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if self.optimizer != "adam" {
            return Err(Error::Config(format!(
                "unknown optimizer '{}'; only 'adam' is built in",
                self.optimizer
            )));
        }
        if self.loss_weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub text: String,
    pub gold: [f64; QUALITY_COUNT],
}

impl TrainSample {
    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Vec<TrainSample>> {
        manifest
            .records
            .iter()
            .map(|r| {
                let gold = r.gold.ok_or_else(|| {
                    Error::Validation(format!(
                        "training record '{}' has no gold vector",
                        r.record_id
                    ))
                })?;
                Ok(TrainSample {
                    text: r.text.clone(),
                    gold: gold.0,
                })
            })
            .collect()
    }
}

/// Per-epoch training losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
}

/// Records per worker chunk within a batch. Chunk boundaries (not thread
/// scheduling) decide the gradient summation order, so runs are
/// bit-reproducible regardless of thread count.
const PAR_CHUNK: usize = 8;

fn batch_pass(
    model: &QeModel,
    batch: &[&TrainSample],
    flavor: Flavor,
    weights: &LossWeights,
) -> Result<(Vec<Vec<Vec<f64>>>, Vec<[f64; QUALITY_COUNT]>)> {
    let chunk_results: Vec<(Vec<Vec<f64>>, Vec<[f64; QUALITY_COUNT]>)> = batch
        .par_chunks(PAR_CHUNK)
        .map(|chunk| -> Result<_> {
            let mut local = model.clone();
            zero_grads(&mut local);
            let mut raws = Vec::with_capacity(chunk.len());
            for sample in chunk {
                let raw = local.forward_train(&sample.text)?;
                let grad = loss_grad(&raw, &sample.gold, flavor, weights, batch.len());
                local.backward(&grad);
                raws.push(raw);
            }
            Ok((export_grads(&mut local), raws))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grads = Vec::with_capacity(chunk_results.len());
    let mut raws = Vec::with_capacity(batch.len());
    for (g, r) in chunk_results {
        grads.push(g);
        raws.extend(r);
    }
    Ok((grads, raws))
}

/// Train a model on explicit samples. Deterministic in `cfg.seed` given
/// the model's initial weights; aborts with a diagnostic if the loss
/// stops being finite.
pub fn train_on(
    model: &mut QeModel,
    samples: &[TrainSample],
    cfg: &TrainingConfig,
) -> Result<TrainingLog> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::EmptyInput("no training samples".into()));
    }
    let flavor = model.flavor();
    let hp = Adam::with_lr(cfg.lr);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut raw_epoch: Vec<[f64; QUALITY_COUNT]> = Vec::with_capacity(samples.len());
        let mut gold_epoch: Vec<[f64; QUALITY_COUNT]> = Vec::with_capacity(samples.len());
        for batch_ids in order.chunks(cfg.batch_size) {
            let batch: Vec<&TrainSample> = batch_ids.iter().map(|&i| &samples[i]).collect();
            zero_grads(model);
            let (grad_bundles, raws) = batch_pass(model, &batch, flavor, &cfg.loss_weights)?;
            for bundle in &grad_bundles {
                add_grads(model, bundle);
            }
            step += 1;
            match cfg.encoder_mode {
                EncodeMode::Trainable => adam_step_all(model, &hp, step),
                EncodeMode::Frozen => {
                    model.visit_head_params(&mut |p| p.adam_step(&hp, step))
                }
            }
            raw_epoch.extend(raws);
            gold_epoch.extend(batch.iter().map(|s| s.gold));
        }
        let loss = combined_loss(&raw_epoch, &gold_epoch, flavor, &cfg.loss_weights)?;
        if !loss.is_finite() {
            return Err(Error::Training {
                epoch,
                msg: format!("non-finite loss {loss}; lower the learning rate"),
            });
        }
        epoch_losses.push(loss);
    }
    Ok(TrainingLog { epoch_losses })
}

/// Train on every record of a manifest (all must carry gold vectors).
pub fn train(
    model: &mut QeModel,
    corpus: &DatasetManifest,
    cfg: &TrainingConfig,
) -> Result<TrainingLog> {
    let samples = TrainSample::from_manifest(corpus)?;
    train_on(model, &samples, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::transformer::zero_weight_transformer;
    use crate::encoders::vocab::Vocab;
    use crate::encoders::{Encoder, EncoderKind, EncoderSpec, Pooling, TransformerEncoder};

    fn tiny_spec(seed: u64) -> EncoderSpec {
        EncoderSpec {
            kind: EncoderKind::PretrainedTransformer,
            d: 8,
            max_tokens: 24,
            layers: 1,
            n_heads: 2,
            hidden: 0,
            embed_dim: 0,
            att_dim: 0,
            pretrained_id: None,
            pooling: Pooling::ClsPooler,
            seed,
        }
    }

    fn fit_vocab(samples: &[TrainSample]) -> Vocab {
        let texts: Vec<&str> = samples.iter().map(|s| s.text.as_str()).collect();
        Vocab::fit_subwords(&texts, 1).unwrap()
    }

    fn constant_samples() -> Vec<TrainSample> {
        ["the cat sat", "the dog ran", "a bird flew by", "the cat ran fast"]
            .iter()
            .map(|t| TrainSample {
                text: t.to_string(),
                gold: [2.0, 3.0, 4.0, 2.5, 3.5],
            })
            .collect()
    }

    fn cfg(lr: f64, epochs: usize, seed: u64) -> TrainingConfig {
        TrainingConfig {
            lr,
            epochs,
            batch_size: 4,
            seed,
            optimizer: "adam".into(),
            loss_weights: [1.0; 5],
            encoder_mode: EncodeMode::Trainable,
        }
    }

    #[test]
    fn bias_only_fit_converges_to_the_gold_constant() {
        // Zero-weight frozen encoder: h = 0, so the prediction is the
        // bias and the fit is convex.
        let samples = constant_samples();
        let vocab = fit_vocab(&samples);
        let encoder =
            Encoder::Transformer(zero_weight_transformer(&tiny_spec(1), vocab).unwrap());
        let mut model = QeModel::new_m1(encoder, 2);
        if let QeModel::M1 { head, .. } = &mut model {
            head.w.v.fill(0.0);
        }
        let mut config = cfg(0.05, 300, 3);
        config.encoder_mode = EncodeMode::Frozen;
        let log = train_on(&mut model, &samples, &config).unwrap();
        let final_loss = *log.epoch_losses.last().unwrap();
        assert!(final_loss < 1e-4, "final loss {final_loss}");
        if let QeModel::M1 { head, .. } = &model {
            for (b, c) in head.b.v.iter().zip([2.0, 3.0, 4.0, 2.5, 3.5]) {
                assert!((b - c).abs() < 0.02, "bias {b} vs gold {c}");
            }
        }
    }

    #[test]
    fn same_seed_gives_identical_losses() {
        let samples = constant_samples();
        let vocab = fit_vocab(&samples);
        let make = || {
            let encoder = Encoder::Transformer(
                TransformerEncoder::init(&tiny_spec(5), fit_vocab(&constant_samples())).unwrap(),
            );
            QeModel::new_m5(encoder, 6)
        };
        let _ = vocab;
        let mut a = make();
        let mut b = make();
        let log_a = train_on(&mut a, &samples, &cfg(0.01, 5, 9)).unwrap();
        let log_b = train_on(&mut b, &samples, &cfg(0.01, 5, 9)).unwrap();
        assert_eq!(log_a, log_b);
        assert_ne!(
            log_a,
            {
                let mut c = make();
                train_on(&mut c, &samples, &cfg(0.01, 5, 10)).unwrap()
            },
            "different shuffling seeds should differ"
        );
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let samples = constant_samples();
        let vocab = fit_vocab(&samples);
        let encoder =
            Encoder::Transformer(TransformerEncoder::init(&tiny_spec(1), vocab).unwrap());
        let mut model = QeModel::new_m1(encoder, 2);
        assert!(train_on(&mut model, &[], &cfg(0.01, 1, 1)).is_err());
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(cfg(0.0, 1, 1).validate().is_err());
        assert!(cfg(-0.1, 1, 1).validate().is_err());
        let mut c = cfg(0.1, 1, 1);
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = cfg(0.1, 1, 1);
        c.optimizer = "sgd".into();
        assert!(c.validate().is_err());
        let mut c = cfg(0.1, 1, 1);
        c.loss_weights[2] = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn frozen_mode_leaves_encoder_weights_untouched() {
        let samples = constant_samples();
        let vocab = fit_vocab(&samples);
        let encoder =
            Encoder::Transformer(TransformerEncoder::init(&tiny_spec(7), vocab).unwrap());
        let before = encoder.encode("the cat sat").unwrap();
        let mut model = QeModel::new_m1(encoder, 2);
        let mut config = cfg(0.05, 3, 4);
        config.encoder_mode = EncodeMode::Frozen;
        train_on(&mut model, &samples, &config).unwrap();
        let QeModel::M1 { encoder, .. } = &model else {
            unreachable!()
        };
        assert_eq!(encoder.encode("the cat sat").unwrap().h, before.h);
    }
}
