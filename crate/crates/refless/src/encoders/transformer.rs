//! A small trainable transformer encoder with BERT-style pooling,
//! loaded from (or saved to) a checkpoint directory.

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::encoders::vocab::Vocab;
use crate::encoders::{EncoderOutput, EncoderSpec, Pooling};
use crate::error::Result;
use crate::nn::param::normal_init;
use crate::nn::{LayerNorm, Linear, Param, Param2, ParamVisit, TransformerBlock, VisitParams};

#[derive(Debug, Clone)]
pub struct TransformerEncoder {
    pub spec: EncoderSpec,
    pub vocab: Vocab,
    tok_emb: Param2,
    pos_emb: Param2,
    emb_ln: LayerNorm,
    blocks: Vec<TransformerBlock>,
    pooler: Linear,
    cache: Option<TrainCache>,
}

#[derive(Debug, Clone)]
struct TrainCache {
    ids: Vec<usize>,
    pooler_in: Array1<f64>,
    pooled_tanh: Option<Array1<f64>>,
    seq_len: usize,
}

impl TransformerEncoder {
    /// Fresh random weights from the spec's seed; the vocabulary is
    /// fitted externally (on training-fold texts) and fixed thereafter.
    pub fn init(spec: &EncoderSpec, vocab: Vocab) -> Result<Self> {
        spec.validate_transformer()?;
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        let d = spec.d;
        let tok_emb = Param::new(normal_init(&mut rng, vocab.len(), d, 0.02));
        let pos_emb = Param::new(normal_init(&mut rng, spec.max_tokens, d, 0.02));
        let blocks = (0..spec.layers)
            .map(|_| TransformerBlock::new(&mut rng, d, spec.n_heads, 2 * d))
            .collect();
        let pooler = Linear::new(&mut rng, d, d);
        Ok(TransformerEncoder {
            spec: spec.clone(),
            vocab,
            tok_emb,
            pos_emb,
            emb_ln: LayerNorm::new(d),
            blocks,
            pooler,
            cache: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.d
    }

    /// Sub-word ids truncated from the end to the token cap.
    pub fn token_ids(&self, text: &str) -> Result<Vec<usize>> {
        let mut ids = self.vocab.encode_subwords(text)?;
        ids.truncate(self.spec.max_tokens);
        Ok(ids)
    }

    fn embed(&self, ids: &[usize]) -> Array2<f64> {
        let d = self.spec.d;
        let mut x = Array2::zeros((ids.len(), d));
        for (pos, &id) in ids.iter().enumerate() {
            let row = &self.tok_emb.v.row(id) + &self.pos_emb.v.row(pos);
            x.row_mut(pos).assign(&row);
        }
        x
    }

    fn pool_infer(&self, seq: &Array2<f64>) -> Array1<f64> {
        match self.spec.pooling {
            Pooling::ClsPooler => self
                .pooler
                .infer(&seq.row(0).to_owned().insert_axis(ndarray::Axis(0)))
                .row(0)
                .mapv(f64::tanh),
            Pooling::ClsRaw => seq.row(0).to_owned(),
            Pooling::Mean => {
                seq.mean_axis(ndarray::Axis(0)).expect("nonempty sequence")
            }
        }
    }

    /// Pure forward pass.
    pub fn encode(&self, text: &str) -> Result<EncoderOutput> {
        let ids = self.token_ids(text)?;
        let mut x = self.emb_ln.infer(&self.embed(&ids));
        for block in &self.blocks {
            x = block.infer(&x);
        }
        EncoderOutput::new(self.pool_infer(&x))
    }

    /// Caching forward pass for training.
    pub fn forward(&mut self, text: &str) -> Result<Array1<f64>> {
        let ids = self.token_ids(text)?;
        let mut x = self.emb_ln.forward(&self.embed(&ids));
        for block in &mut self.blocks {
            x = block.forward(&x);
        }
        let seq_len = x.nrows();
        let (h, pooler_in, pooled_tanh) = match self.spec.pooling {
            Pooling::ClsPooler => {
                let cls = x.row(0).to_owned();
                let lin = self
                    .pooler
                    .forward(&cls.clone().insert_axis(ndarray::Axis(0)));
                let tanh = lin.row(0).mapv(f64::tanh);
                (tanh.clone(), cls, Some(tanh))
            }
            Pooling::ClsRaw => (x.row(0).to_owned(), x.row(0).to_owned(), None),
            Pooling::Mean => (
                x.mean_axis(ndarray::Axis(0)).expect("nonempty"),
                x.row(0).to_owned(),
                None,
            ),
        };
        self.cache = Some(TrainCache {
            ids,
            pooler_in,
            pooled_tanh,
            seq_len,
        });
        Ok(h)
    }

    /// Backward from the pooled-representation gradient; accumulates
    /// parameter gradients.
    pub fn backward(&mut self, dh: &Array1<f64>) {
        let cache = self.cache.take().expect("forward before backward");
        let d = self.spec.d;
        let t = cache.seq_len;
        let mut dx = Array2::zeros((t, d));
        match self.spec.pooling {
            Pooling::ClsPooler => {
                let tanh = cache.pooled_tanh.expect("pooler cache");
                let dlin: Array1<f64> = dh * &tanh.mapv(|v| 1.0 - v * v);
                let dcls = self
                    .pooler
                    .backward(&dlin.insert_axis(ndarray::Axis(0)))
                    .row(0)
                    .to_owned();
                dx.row_mut(0).assign(&dcls);
            }
            Pooling::ClsRaw => {
                dx.row_mut(0).assign(dh);
            }
            Pooling::Mean => {
                let scaled = dh / t as f64;
                for mut row in dx.rows_mut() {
                    row.assign(&scaled);
                }
            }
        }
        for block in self.blocks.iter_mut().rev() {
            dx = block.backward(&dx);
        }
        let demb = self.emb_ln.backward(&dx);
        for (pos, &id) in cache.ids.iter().enumerate() {
            let mut tok_row = self.tok_emb.g.row_mut(id);
            tok_row += &demb.row(pos);
            let mut pos_row = self.pos_emb.g.row_mut(pos);
            pos_row += &demb.row(pos);
        }
        let _ = cache.pooler_in;
    }
}

impl VisitParams for TransformerEncoder {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        f(&mut self.tok_emb);
        f(&mut self.pos_emb);
        self.emb_ln.visit_params(f);
        for block in &mut self.blocks {
            block.visit_params(f);
        }
        self.pooler.visit_params(f);
    }
}

/// Build an all-zero-weight instance: every encoding is the zero vector,
/// which makes bias-only regression fits exactly solvable. Test helper.
pub fn zero_weight_transformer(spec: &EncoderSpec, vocab: Vocab) -> Result<TransformerEncoder> {
    let mut enc = TransformerEncoder::init(spec, vocab)?;
    enc.visit_params(&mut |p| {
        for i in 0..p.len() {
            p.set(i, 0.0);
        }
    });
    // Keep layer norms' scale at zero too; normalized zeros stay zero.
    Ok(enc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderKind;
    use crate::nn::gradcheck::check_model_grads;

    fn spec(d: usize, max_tokens: usize) -> EncoderSpec {
        EncoderSpec {
            kind: EncoderKind::PretrainedTransformer,
            d,
            max_tokens,
            layers: 1,
            n_heads: 2,
            hidden: 0,
            embed_dim: 0,
            att_dim: 0,
            pretrained_id: None,
            pooling: Pooling::ClsPooler,
            seed: 7,
        }
    }

    fn enc(d: usize, max_tokens: usize) -> TransformerEncoder {
        let vocab = Vocab::fit_subwords(&["the cat sat on the mat near the dog"], 1).unwrap();
        TransformerEncoder::init(&spec(d, max_tokens), vocab).unwrap()
    }

    #[test]
    fn output_has_the_declared_dimension() {
        let enc = enc(8, 32);
        for text in ["the cat", "the cat sat on the mat", "dog"] {
            let out = enc.encode(text).unwrap();
            assert_eq!(out.h.len(), 8);
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let enc = enc(8, 32);
        let a = enc.encode("the cat sat").unwrap();
        let b = enc.encode("the cat sat").unwrap();
        assert_eq!(a.h, b.h);
    }

    #[test]
    fn empty_text_is_an_error() {
        let enc = enc(8, 32);
        assert!(enc.encode("  ").is_err());
    }

    #[test]
    fn three_hundred_words_fit_in_a_512_window() {
        let vocab = Vocab::fit_subwords(&["the cat sat on the mat near a dog today"], 1).unwrap();
        let enc = TransformerEncoder::init(&spec(8, 512), vocab).unwrap();
        let sentence = "the cat sat on the mat near a dog today";
        let text = vec![sentence; 30].join(" ");
        assert_eq!(crate::text::word_tokens(&text).len(), 300);
        let ids = enc.token_ids(&text).unwrap();
        // 300 known words + CLS + SEP: nothing truncated.
        assert_eq!(ids.len(), 302);
    }

    #[test]
    fn texts_identical_up_to_the_cap_encode_identically() {
        let vocab = Vocab::fit_subwords(&["a b c d e f g h"], 1).unwrap();
        let enc = TransformerEncoder::init(&spec(8, 6), vocab).unwrap();
        let short = "a b c d e f g h";
        let long = "a b c d e f g h a b c d";
        assert_eq!(enc.encode(short).unwrap().h, enc.encode(long).unwrap().h);
    }

    #[test]
    fn zero_weights_encode_to_zero() {
        let vocab = Vocab::fit_subwords(&["x y z"], 1).unwrap();
        let enc = zero_weight_transformer(&spec(8, 16), vocab).unwrap();
        let out = enc.encode("x y").unwrap();
        assert!(out.h.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn forward_matches_encode_and_gradients_check() {
        let mut enc = enc(4, 16);
        let text = "the cat sat";
        let pure_h = enc.encode(text).unwrap().h;
        let train_h = enc.forward(text).unwrap();
        assert_eq!(pure_h, train_h);
        enc.cache = None;

        // Finite differences through a quadratic loss on the pooled
        // output. The input matrix is unused; the text is fixed.
        let dummy = Array2::zeros((1, 1));
        let err = check_model_grads(
            &mut enc,
            |m, _| {
                let h = m.forward(text).unwrap();
                m.backward(&h.mapv(|v| 2.0 * v));
                h.map(|v| v * v).sum()
            },
            |m, _| m.encode(text).unwrap().h.map(|v| v * v).sum(),
            &dummy,
            1e-4,
        );
        assert!(err < 1e-5, "rel err {err}");
    }
}
