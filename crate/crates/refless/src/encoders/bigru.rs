//! BiGRU stack with additive self-attention over token states:
//! `h = sum_i a_i h_i`.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::encoders::vocab::Vocab;
use crate::encoders::{AttentionWeights, EncoderOutput, EncoderSpec};
use crate::error::Result;
use crate::nn::param::normal_init;
use crate::nn::{AdditivePool, BiGruLayer, Param, Param2, ParamVisit, VisitParams};

#[derive(Debug, Clone)]
pub struct BiGruEncoder {
    pub spec: EncoderSpec,
    pub vocab: Vocab,
    emb: Param2,
    layers: Vec<BiGruLayer>,
    pool: AdditivePool,
    cache_ids: Option<Vec<usize>>,
}

impl BiGruEncoder {
    /// Fresh random weights; word embeddings are learned from scratch,
    /// so the vocabulary comes from the training folds.
    pub fn init(spec: &EncoderSpec, vocab: Vocab) -> Result<Self> {
        spec.validate_bigru()?;
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        let emb = Param::new(normal_init(&mut rng, vocab.len(), spec.embed_dim, 0.1));
        let mut layers = Vec::with_capacity(spec.layers);
        let mut in_dim = spec.embed_dim;
        for _ in 0..spec.layers {
            layers.push(BiGruLayer::new(&mut rng, in_dim, spec.hidden));
            in_dim = 2 * spec.hidden;
        }
        let pool = AdditivePool::new(&mut rng, in_dim, spec.att_dim);
        Ok(BiGruEncoder {
            spec: spec.clone(),
            vocab,
            emb,
            layers,
            pool,
            cache_ids: None,
        })
    }

    pub fn dim(&self) -> usize {
        2 * self.spec.hidden
    }

    pub fn token_ids(&self, text: &str) -> Result<Vec<usize>> {
        let mut ids = self.vocab.encode_words(text)?;
        ids.truncate(self.spec.max_tokens);
        Ok(ids)
    }

    fn embed(&self, ids: &[usize]) -> Array2<f64> {
        let mut x = Array2::zeros((ids.len(), self.spec.embed_dim));
        for (pos, &id) in ids.iter().enumerate() {
            x.row_mut(pos).assign(&self.emb.v.row(id));
        }
        x
    }

    /// Pure forward pass: pooled representation plus attention weights.
    pub fn encode(&self, text: &str) -> Result<(EncoderOutput, AttentionWeights)> {
        let ids = self.token_ids(text)?;
        let mut states = self.embed(&ids);
        for layer in &self.layers {
            states = layer.infer(&states);
        }
        let (a, pooled) = self.pool.infer(&states);
        Ok((EncoderOutput::new(pooled)?, AttentionWeights::new(a)?))
    }

    /// Caching forward pass for training.
    pub fn forward(&mut self, text: &str) -> Result<Array1<f64>> {
        let ids = self.token_ids(text)?;
        let mut states = self.embed(&ids);
        for layer in &mut self.layers {
            states = layer.forward(&states);
        }
        let (_, pooled) = self.pool.forward(&states);
        self.cache_ids = Some(ids);
        Ok(pooled)
    }

    pub fn backward(&mut self, dh: &Array1<f64>) {
        let ids = self.cache_ids.take().expect("forward before backward");
        let mut dstates = self.pool.backward(dh);
        for layer in self.layers.iter_mut().rev() {
            dstates = layer.backward(&dstates);
        }
        for (pos, &id) in ids.iter().enumerate() {
            let mut row = self.emb.g.row_mut(id);
            row += &dstates.row(pos);
        }
    }
}

impl VisitParams for BiGruEncoder {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        f(&mut self.emb);
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
        self.pool.visit_params(f);
    }
}
