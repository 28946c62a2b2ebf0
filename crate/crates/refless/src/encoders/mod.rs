//! Text encoders: a summary goes in, a dense representation comes out.

pub mod bigru;
pub mod checkpoint;
pub mod transformer;
pub mod vocab;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

pub use bigru::BiGruEncoder;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use transformer::TransformerEncoder;
pub use vocab::Vocab;

use crate::error::{Error, Result};
use crate::nn::{ParamVisit, VisitParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderKind {
    #[serde(rename = "pretrained-transformer")]
    PretrainedTransformer,
    #[serde(rename = "bigru-attention")]
    BigruAttention,
}

/// How the transformer's sequence states collapse into one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    /// First-token state through a dense+tanh pooler layer (the
    /// standard classification representation). Default.
    #[default]
    ClsPooler,
    /// Raw first-token state.
    ClsRaw,
    /// Mean over token states.
    Mean,
}

/// Architecture and identity of one encoder instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// Output dimension: model width for the transformer, twice the
    /// per-direction hidden size for the BiGRU.
    pub d: usize,
    pub max_tokens: usize,
    /// Transformer blocks or stacked BiGRU layers.
    pub layers: usize,
    #[serde(default)]
    pub n_heads: usize,
    /// Per-direction hidden size (recurrent kind only).
    #[serde(default)]
    pub hidden: usize,
    /// Word-embedding size (recurrent kind only).
    #[serde(default)]
    pub embed_dim: usize,
    /// Additive-attention width (recurrent kind only).
    #[serde(default)]
    pub att_dim: usize,
    /// Checkpoint directory for the pretrained transformer kind.
    #[serde(default)]
    pub pretrained_id: Option<String>,
    #[serde(default)]
    pub pooling: Pooling,
    pub seed: u64,
}

impl EncoderSpec {
    pub fn validate_transformer(&self) -> Result<()> {
        if self.kind != EncoderKind::PretrainedTransformer {
            return Err(Error::Config("spec is not a transformer spec".into()));
        }
        if self.max_tokens < 1 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        if self.layers < 1 || self.n_heads < 1 || self.d % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "bad transformer shape: layers {}, heads {}, d {}",
                self.layers, self.n_heads, self.d
            )));
        }
        Ok(())
    }

    pub fn validate_bigru(&self) -> Result<()> {
        if self.kind != EncoderKind::BigruAttention {
            return Err(Error::Config("spec is not a recurrent spec".into()));
        }
        if self.max_tokens < 1 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        if self.layers < 1 || self.hidden < 1 || self.embed_dim < 1 || self.att_dim < 1 {
            return Err(Error::Config(format!(
                "bad recurrent shape: layers {}, hidden {}, embed {}, att {}",
                self.layers, self.hidden, self.embed_dim, self.att_dim
            )));
        }
        if self.d != 2 * self.hidden {
            return Err(Error::Config(format!(
                "d must equal 2*hidden for the bidirectional encoder: d {}, hidden {}",
                self.d, self.hidden
            )));
        }
        Ok(())
    }
}

/// Dense summary representation of fixed dimension with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub h: Array1<f64>,
}

impl EncoderOutput {
    pub fn new(h: Array1<f64>) -> Result<Self> {
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite encoder output".into()));
        }
        Ok(EncoderOutput { h })
    }

    pub fn d(&self) -> usize {
        self.h.len()
    }
}

/// Self-attention weights over token positions: non-negative, summing
/// to 1 within 1e-6.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub a: Array1<f64>,
}

impl AttentionWeights {
    pub fn new(a: Array1<f64>) -> Result<Self> {
        if a.iter().any(|w| *w < 0.0) {
            return Err(Error::Validation("negative attention weight".into()));
        }
        if (a.sum() - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!(
                "attention weights sum to {}, expected 1",
                a.sum()
            )));
        }
        Ok(AttentionWeights { a })
    }
}

/// Whether training updates encoder weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodeMode {
    #[default]
    Trainable,
    Frozen,
}

/// Either encoder kind behind one interface.
#[derive(Debug, Clone)]
pub enum Encoder {
    Transformer(TransformerEncoder),
    BiGru(BiGruEncoder),
}

impl Encoder {
    /// Build from a spec. The transformer kind resolves its pretrained
    /// identifier (a checkpoint directory); failure to resolve is a load
    /// error. The recurrent kind initializes fresh weights with the
    /// given vocabulary.
    pub fn from_spec(spec: &EncoderSpec, vocab: Option<Vocab>) -> Result<Encoder> {
        match spec.kind {
            EncoderKind::PretrainedTransformer => {
                let id = spec.pretrained_id.as_deref().ok_or_else(|| {
                    Error::Checkpoint(
                        "transformer spec names no pretrained identifier".into(),
                    )
                })?;
                let encoder = load_checkpoint(std::path::Path::new(id))?;
                Ok(encoder)
            }
            EncoderKind::BigruAttention => {
                let vocab = vocab.ok_or_else(|| {
                    Error::Config("the recurrent encoder needs a fitted vocabulary".into())
                })?;
                Ok(Encoder::BiGru(BiGruEncoder::init(spec, vocab)?))
            }
        }
    }

    pub fn spec(&self) -> &EncoderSpec {
        match self {
            Encoder::Transformer(e) => &e.spec,
            Encoder::BiGru(e) => &e.spec,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Encoder::Transformer(e) => e.dim(),
            Encoder::BiGru(e) => e.dim(),
        }
    }

    /// Pure encoding; safe on shared read-only weights.
    pub fn encode(&self, text: &str) -> Result<EncoderOutput> {
        match self {
            Encoder::Transformer(e) => e.encode(text),
            Encoder::BiGru(e) => e.encode(text).map(|(h, _)| h),
        }
    }

    /// Caching forward pass for training.
    pub fn forward(&mut self, text: &str) -> Result<Array1<f64>> {
        match self {
            Encoder::Transformer(e) => e.forward(text),
            Encoder::BiGru(e) => e.forward(text),
        }
    }

    pub fn backward(&mut self, dh: &Array1<f64>) {
        match self {
            Encoder::Transformer(e) => e.backward(dh),
            Encoder::BiGru(e) => e.backward(dh),
        }
    }
}

impl VisitParams for Encoder {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        match self {
            Encoder::Transformer(e) => e.visit_params(f),
            Encoder::BiGru(e) => e.visit_params(f),
        }
    }
}
