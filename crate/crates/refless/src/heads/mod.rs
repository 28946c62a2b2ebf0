//! Affine regression heads over encoder output and the three training
//! flavors: S-1 (five encoder+head pairs, one per quality), M-1 (one
//! encoder, one five-output head) and M-5 (one encoder, five one-output
//! heads).

mod model_io;
mod train;

pub use model_io::{load_model, save_model, ModelManifest};
pub use train::{train, train_on, TrainSample, TrainingConfig, TrainingLog};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{QualityVector, QUALITY_COUNT};
use crate::encoders::Encoder;
use crate::error::{Error, Result};
use crate::nn::param::xavier_uniform;
use crate::nn::{Param, Param1, Param2, ParamVisit, VisitParams};

/// The three ways of wiring encoders to regression heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    #[serde(rename = "s-1")]
    S1,
    #[serde(rename = "m-1")]
    M1,
    #[serde(rename = "m-5")]
    M5,
}

impl std::fmt::Display for Flavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Flavor::S1 => write!(f, "s-1"),
            Flavor::M1 => write!(f, "m-1"),
            Flavor::M5 => write!(f, "m-5"),
        }
    }
}

/// Encoder/head counts implied by a flavor; the combination is fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlavorSpec {
    pub flavor: Flavor,
    pub encoder_count: usize,
    pub head_count: usize,
    /// Outputs per head: 5 for the single M-1 head, 1 otherwise.
    pub head_outputs: usize,
}

impl FlavorSpec {
    pub fn of(flavor: Flavor) -> FlavorSpec {
        match flavor {
            Flavor::S1 => FlavorSpec {
                flavor,
                encoder_count: QUALITY_COUNT,
                head_count: QUALITY_COUNT,
                head_outputs: 1,
            },
            Flavor::M1 => FlavorSpec {
                flavor,
                encoder_count: 1,
                head_count: 1,
                head_outputs: QUALITY_COUNT,
            },
            Flavor::M5 => FlavorSpec {
                flavor,
                encoder_count: 1,
                head_count: QUALITY_COUNT,
                head_outputs: 1,
            },
        }
    }
}

/// Affine regressor: `W h + b` with an (m x d) weight matrix.
#[derive(Debug, Clone)]
pub struct AffineHead {
    pub w: Param2,
    pub b: Param1,
    cache_h: Option<Array1<f64>>,
}

impl AffineHead {
    pub fn new(rng: &mut ChaCha12Rng, d: usize, m: usize) -> Self {
        AffineHead {
            w: Param::new(xavier_uniform(rng, m, d)),
            b: Param::new(Array1::zeros(m)),
            cache_h: None,
        }
    }

    pub fn from_weights(w: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        if w.nrows() != b.len() {
            return Err(Error::Shape(format!(
                "head W has {} rows but b has {} entries",
                w.nrows(),
                b.len()
            )));
        }
        if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite head weights".into()));
        }
        Ok(AffineHead {
            w: Param::new(w),
            b: Param::new(b),
            cache_h: None,
        })
    }

    pub fn outputs(&self) -> usize {
        self.w.v.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.v.ncols()
    }

    pub fn predict(&self, h: &Array1<f64>) -> Result<Array1<f64>> {
        if h.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "head expects dimension {}, got {}",
                self.input_dim(),
                h.len()
            )));
        }
        Ok(self.w.v.dot(h) + &self.b.v)
    }

    fn forward(&mut self, h: &Array1<f64>) -> Result<Array1<f64>> {
        let y = self.predict(h)?;
        self.cache_h = Some(h.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Array1<f64>) -> Array1<f64> {
        let h = self.cache_h.take().expect("forward before backward");
        for (mut row, &g) in self.w.g.rows_mut().into_iter().zip(dy.iter()) {
            row.scaled_add(g, &h);
        }
        self.b.g += dy;
        self.w.v.t().dot(dy)
    }
}

impl VisitParams for AffineHead {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// `W h + b`, exactly.
pub fn affine_predict(head: &AffineHead, h: &Array1<f64>) -> Result<Array1<f64>> {
    head.predict(h)
}

/// A prediction for one summary: raw regressor output plus the clipped
/// vector that feeds evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityPrediction {
    pub record_id: String,
    pub raw: [f64; QUALITY_COUNT],
    pub predicted: QualityVector,
}

impl QualityPrediction {
    pub fn from_raw(record_id: impl Into<String>, raw: [f64; QUALITY_COUNT]) -> Self {
        QualityPrediction {
            record_id: record_id.into(),
            raw,
            predicted: QualityVector::from_raw_clipped(raw),
        }
    }
}

/// A quality-estimation model: encoders wired to affine heads per the
/// flavor's layout.
#[derive(Debug, Clone)]
pub enum QeModel {
    S1 { pairs: Vec<(Encoder, AffineHead)> },
    M1 { encoder: Encoder, head: AffineHead },
    M5 { encoder: Encoder, heads: Vec<AffineHead> },
}

impl QeModel {
    /// Five separate estimators, one per quality.
    pub fn new_s1(encoders: Vec<Encoder>, seed: u64) -> Result<QeModel> {
        if encoders.len() != QUALITY_COUNT {
            return Err(Error::Config(format!(
                "the single-task flavor needs {QUALITY_COUNT} encoders, got {}",
                encoders.len()
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let pairs = encoders
            .into_iter()
            .map(|e| {
                let head = AffineHead::new(&mut rng, e.dim(), 1);
                (e, head)
            })
            .collect();
        Ok(QeModel::S1 { pairs })
    }

    /// One encoder, one five-output head.
    pub fn new_m1(encoder: Encoder, seed: u64) -> QeModel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let head = AffineHead::new(&mut rng, encoder.dim(), QUALITY_COUNT);
        QeModel::M1 { encoder, head }
    }

    /// One encoder, five one-output heads.
    pub fn new_m5(encoder: Encoder, seed: u64) -> QeModel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let heads = (0..QUALITY_COUNT)
            .map(|_| AffineHead::new(&mut rng, encoder.dim(), 1))
            .collect();
        QeModel::M5 { encoder, heads }
    }

    pub fn flavor(&self) -> Flavor {
        match self {
            QeModel::S1 { .. } => Flavor::S1,
            QeModel::M1 { .. } => Flavor::M1,
            QeModel::M5 { .. } => Flavor::M5,
        }
    }

    pub fn flavor_spec(&self) -> FlavorSpec {
        FlavorSpec::of(self.flavor())
    }

    /// Raw five-component prediction, pure inference path.
    pub fn predict_raw(&self, text: &str) -> Result<[f64; QUALITY_COUNT]> {
        let mut raw = [0.0; QUALITY_COUNT];
        match self {
            QeModel::S1 { pairs } => {
                for (i, (encoder, head)) in pairs.iter().enumerate() {
                    let h = encoder.encode(text)?;
                    raw[i] = head.predict(&h.h)?[0];
                }
            }
            QeModel::M1 { encoder, head } => {
                let h = encoder.encode(text)?;
                let y = head.predict(&h.h)?;
                for (r, v) in raw.iter_mut().zip(y.iter()) {
                    *r = *v;
                }
            }
            QeModel::M5 { encoder, heads } => {
                let h = encoder.encode(text)?;
                for (i, head) in heads.iter().enumerate() {
                    raw[i] = head.predict(&h.h)?[0];
                }
            }
        }
        Ok(raw)
    }

    /// Predict one summary, clipping into the reporting range.
    pub fn predict(&self, record_id: &str, text: &str) -> Result<QualityPrediction> {
        Ok(QualityPrediction::from_raw(record_id, self.predict_raw(text)?))
    }

    /// Caching forward pass; pair with [`QeModel::backward`].
    pub fn forward_train(&mut self, text: &str) -> Result<[f64; QUALITY_COUNT]> {
        let mut raw = [0.0; QUALITY_COUNT];
        match self {
            QeModel::S1 { pairs } => {
                for (i, (encoder, head)) in pairs.iter_mut().enumerate() {
                    let h = encoder.forward(text)?;
                    raw[i] = head.forward(&h)?[0];
                }
            }
            QeModel::M1 { encoder, head } => {
                let h = encoder.forward(text)?;
                let y = head.forward(&h)?;
                for (r, v) in raw.iter_mut().zip(y.iter()) {
                    *r = *v;
                }
            }
            QeModel::M5 { encoder, heads } => {
                let h = encoder.forward(text)?;
                for (i, head) in heads.iter_mut().enumerate() {
                    raw[i] = head.forward(&h)?[0];
                }
            }
        }
        Ok(raw)
    }

    /// Backward from the loss gradient w.r.t. the raw prediction.
    pub fn backward(&mut self, draw: &[f64; QUALITY_COUNT]) {
        match self {
            QeModel::S1 { pairs } => {
                for (i, (encoder, head)) in pairs.iter_mut().enumerate() {
                    let dh = head.backward(&ndarray::array![draw[i]]);
                    encoder.backward(&dh);
                }
            }
            QeModel::M1 { encoder, head } => {
                let dh = head.backward(&Array1::from_iter(draw.iter().copied()));
                encoder.backward(&dh);
            }
            QeModel::M5 { encoder, heads } => {
                let mut dh = Array1::zeros(encoder.dim());
                for (i, head) in heads.iter_mut().enumerate() {
                    dh += &head.backward(&ndarray::array![draw[i]]);
                }
                encoder.backward(&dh);
            }
        }
    }

    pub fn visit_encoder_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        match self {
            QeModel::S1 { pairs } => {
                for (encoder, _) in pairs {
                    encoder.visit_params(f);
                }
            }
            QeModel::M1 { encoder, .. } => encoder.visit_params(f),
            QeModel::M5 { encoder, .. } => encoder.visit_params(f),
        }
    }

    pub fn visit_head_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        match self {
            QeModel::S1 { pairs } => {
                for (_, head) in pairs {
                    head.visit_params(f);
                }
            }
            QeModel::M1 { head, .. } => head.visit_params(f),
            QeModel::M5 { heads, .. } => {
                for head in heads {
                    head.visit_params(f);
                }
            }
        }
    }

    /// Build the M-1 model equivalent to an M-5 model: same encoder
    /// weights, the five one-output heads stacked row-wise into one
    /// five-output head.
    pub fn stack_m5_as_m1(&self) -> Result<QeModel> {
        let QeModel::M5 { encoder, heads } = self else {
            return Err(Error::Config("stacking needs an M-5 model".into()));
        };
        let d = encoder.dim();
        let mut w = Array2::zeros((QUALITY_COUNT, d));
        let mut b = Array1::zeros(QUALITY_COUNT);
        for (i, head) in heads.iter().enumerate() {
            w.row_mut(i).assign(&head.w.v.row(0));
            b[i] = head.b.v[0];
        }
        Ok(QeModel::M1 {
            encoder: encoder.clone(),
            head: AffineHead::from_weights(w, b)?,
        })
    }
}

impl VisitParams for QeModel {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        // Encoders first, then heads, in a stable order shared with the
        // checkpoint layout.
        self.visit_encoder_params(f);
        self.visit_head_params(f);
    }
}

/// Per-head loss weights; all ones by default.
pub type LossWeights = [f64; QUALITY_COUNT];

/// Combine per-example raw predictions and golds into the flavor's
/// scalar training loss.
///
/// M-5 is the weighted *sum* of per-head MSEs; M-1 is the MSE over the
/// five-component output (the equal-weight sum divided by 5); S-1 sums
/// the five per-quality MSEs of regressors that are trained
/// independently (their parameters are disjoint, so the gradient of the
/// sum is the gradient of each independent loss).
pub fn combined_loss(
    raw: &[[f64; QUALITY_COUNT]],
    gold: &[[f64; QUALITY_COUNT]],
    flavor: Flavor,
    weights: &LossWeights,
) -> Result<f64> {
    if raw.is_empty() {
        return Err(Error::EmptyInput("empty batch".into()));
    }
    if raw.len() != gold.len() {
        return Err(Error::Shape(format!(
            "batch size mismatch: {} predictions vs {} golds",
            raw.len(),
            gold.len()
        )));
    }
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::Validation("loss weights must be non-negative".into()));
    }
    let n = raw.len() as f64;
    let mut per_component = [0.0; QUALITY_COUNT];
    for (r, g) in raw.iter().zip(gold.iter()) {
        for i in 0..QUALITY_COUNT {
            let d = r[i] - g[i];
            per_component[i] += d * d;
        }
    }
    let loss = match flavor {
        Flavor::M5 => per_component
            .iter()
            .zip(weights.iter())
            .map(|(sq, w)| w * sq / n)
            .sum(),
        Flavor::M1 => per_component.iter().sum::<f64>() / (QUALITY_COUNT as f64 * n),
        Flavor::S1 => per_component.iter().map(|sq| sq / n).sum(),
    };
    Ok(loss)
}

/// Gradient of [`combined_loss`] w.r.t. one example's raw prediction.
pub(crate) fn loss_grad(
    raw: &[f64; QUALITY_COUNT],
    gold: &[f64; QUALITY_COUNT],
    flavor: Flavor,
    weights: &LossWeights,
    batch_size: usize,
) -> [f64; QUALITY_COUNT] {
    let n = batch_size as f64;
    let mut grad = [0.0; QUALITY_COUNT];
    for i in 0..QUALITY_COUNT {
        let d = raw[i] - gold[i];
        grad[i] = match flavor {
            Flavor::M5 => 2.0 * weights[i] * d / n,
            Flavor::M1 => 2.0 * d / (QUALITY_COUNT as f64 * n),
            Flavor::S1 => 2.0 * d / n,
        };
    }
    grad
}
