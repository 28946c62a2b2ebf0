//! Multi-head self-attention and the residual transformer block.

use ndarray::{s, Array2};
use rand_chacha::ChaCha12Rng;

use super::layers::{softmax_backward_rows, softmax_rows, Gelu, LayerNorm, Linear};
use super::param::{ParamVisit, VisitParams};

#[derive(Debug, Clone)]
pub struct MultiHeadSelfAttention {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    n_heads: usize,
    cache: Option<AttnCache>,
}

#[derive(Debug, Clone)]
struct AttnCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
}

impl MultiHeadSelfAttention {
    pub fn new(rng: &mut ChaCha12Rng, dim: usize, n_heads: usize) -> Self {
        assert!(dim % n_heads == 0, "dim must divide evenly into heads");
        MultiHeadSelfAttention {
            wq: Linear::new(rng, dim, dim),
            wk: Linear::new(rng, dim, dim),
            wv: Linear::new(rng, dim, dim),
            wo: Linear::new(rng, dim, dim),
            n_heads,
            cache: None,
        }
    }

    fn head_context(
        &self,
        q: &Array2<f64>,
        k: &Array2<f64>,
        v: &Array2<f64>,
    ) -> (Array2<f64>, Vec<Array2<f64>>) {
        let t = q.nrows();
        let dim = q.ncols();
        let dh = dim / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Array2::zeros((t, dim));
        let mut attn = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let qh = q.slice(cols);
            let kh = k.slice(cols);
            let vh = v.slice(cols);
            let scores = qh.dot(&kh.t()) * scale;
            let a = softmax_rows(&scores);
            ctx.slice_mut(cols).assign(&a.dot(&vh));
            attn.push(a);
        }
        (ctx, attn)
    }

    pub fn infer(&self, x: &Array2<f64>) -> Array2<f64> {
        let q = self.wq.infer(x);
        let k = self.wk.infer(x);
        let v = self.wv.infer(x);
        let (ctx, _) = self.head_context(&q, &k, &v);
        self.wo.infer(&ctx)
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);
        let (ctx, attn) = self.head_context(&q, &k, &v);
        let y = self.wo.forward(&ctx);
        self.cache = Some(AttnCache { q, k, v, attn });
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let cache = self.cache.take().expect("forward before backward");
        let dctx = self.wo.backward(dy);
        let t = dctx.nrows();
        let dim = dctx.ncols();
        let dh = dim / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Array2::zeros((t, dim));
        let mut dk = Array2::zeros((t, dim));
        let mut dv = Array2::zeros((t, dim));
        for h in 0..self.n_heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let a = &cache.attn[h];
            let kh = cache.k.slice(cols);
            let qh = cache.q.slice(cols);
            let vh = cache.v.slice(cols);
            let dctx_h = dctx.slice(cols);
            let da = dctx_h.dot(&vh.t());
            dv.slice_mut(cols).assign(&a.t().dot(&dctx_h));
            let dscores = softmax_backward_rows(a, &da) * scale;
            dq.slice_mut(cols).assign(&dscores.dot(&kh));
            dk.slice_mut(cols).assign(&dscores.t().dot(&qh));
        }
        let mut dx = self.wq.backward(&dq);
        dx += &self.wk.backward(&dk);
        dx += &self.wv.backward(&dv);
        dx
    }
}

impl VisitParams for MultiHeadSelfAttention {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        self.wq.visit_params(f);
        self.wk.visit_params(f);
        self.wv.visit_params(f);
        self.wo.visit_params(f);
    }
}

/// Post-norm transformer block: attention and feed-forward sublayers,
/// each wrapped in a residual connection followed by layer norm.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub attn: MultiHeadSelfAttention,
    pub ln1: LayerNorm,
    pub ff1: Linear,
    pub act: Gelu,
    pub ff2: Linear,
    pub ln2: LayerNorm,
}

impl TransformerBlock {
    pub fn new(rng: &mut ChaCha12Rng, dim: usize, n_heads: usize, ff_dim: usize) -> Self {
        TransformerBlock {
            attn: MultiHeadSelfAttention::new(rng, dim, n_heads),
            ln1: LayerNorm::new(dim),
            ff1: Linear::new(rng, dim, ff_dim),
            act: Gelu::default(),
            ff2: Linear::new(rng, ff_dim, dim),
            ln2: LayerNorm::new(dim),
        }
    }

    pub fn infer(&self, x: &Array2<f64>) -> Array2<f64> {
        let h = self.ln1.infer(&(x + &self.attn.infer(x)));
        let f = self.ff2.infer(&self.act.infer(&self.ff1.infer(&h)));
        self.ln2.infer(&(&h + &f))
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let a = self.attn.forward(x);
        let h = self.ln1.forward(&(x + &a));
        let f = self.ff2.forward(&self.act.forward(&self.ff1.forward(&h)));
        self.ln2.forward(&(&h + &f))
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let dsum2 = self.ln2.backward(dy);
        let df = self
            .ff1
            .backward(&self.act.backward(&self.ff2.backward(&dsum2)));
        let dh = &dsum2 + &df;
        let dsum1 = self.ln1.backward(&dh);
        let dx_attn = self.attn.backward(&dsum1);
        &dsum1 + &dx_attn
    }
}

impl VisitParams for TransformerBlock {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        self.attn.visit_params(f);
        self.ln1.visit_params(f);
        self.ff1.visit_params(f);
        self.ff2.visit_params(f);
        self.ln2.visit_params(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_input_grad, check_model_grads};
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn attention_rows_are_convex_mixes_of_values() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let attn = MultiHeadSelfAttention::new(&mut rng, 4, 2);
        let x = array![[0.2, -0.1, 0.5, 0.3], [1.0, 0.4, -0.2, 0.8], [0.0, 0.9, 0.1, -0.5]];
        let q = attn.wq.infer(&x);
        let k = attn.wk.infer(&x);
        let v = attn.wv.infer(&x);
        let (_, weights) = attn.head_context(&q, &k, &v);
        for a in weights {
            for row in a.rows() {
                assert!((row.sum() - 1.0).abs() < 1e-9);
                assert!(row.iter().all(|w| *w >= 0.0));
            }
        }
    }

    #[test]
    fn attention_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut attn = MultiHeadSelfAttention::new(&mut rng, 4, 2);
        let x = array![[0.2, -0.1, 0.5, 0.3], [1.0, 0.4, -0.2, 0.8], [0.0, 0.9, 0.1, -0.5]];
        let train = |m: &mut MultiHeadSelfAttention, x: &Array2<f64>| {
            let y = m.forward(x);
            let dx = m.backward(&y.mapv(|v| 2.0 * v));
            (y.map(|v| v * v).sum(), dx)
        };
        let pure =
            |m: &mut MultiHeadSelfAttention, x: &Array2<f64>| m.infer(x).map(|v| v * v).sum();
        let err = check_model_grads(&mut attn, |m, x| train(m, x).0, pure, &x, 1e-4);
        assert!(err < 1e-5, "param rel err {err}");
        let input_err = check_input_grad(&mut attn, train, pure, &x, 1e-4);
        assert!(input_err < 1e-5, "input rel err {input_err}");
    }

    #[test]
    fn block_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut block = TransformerBlock::new(&mut rng, 4, 2, 8);
        let x = array![[0.2, -0.1, 0.5, 0.3], [1.0, 0.4, -0.2, 0.8]];
        let train = |m: &mut TransformerBlock, x: &Array2<f64>| {
            let y = m.forward(x);
            let dx = m.backward(&y.mapv(|v| 2.0 * v));
            (y.map(|v| v * v).sum(), dx)
        };
        let pure = |m: &mut TransformerBlock, x: &Array2<f64>| m.infer(x).map(|v| v * v).sum();
        let err = check_model_grads(&mut block, |m, x| train(m, x).0, pure, &x, 1e-4);
        assert!(err < 1e-5, "param rel err {err}");
        let input_err = check_input_grad(&mut block, train, pure, &x, 1e-4);
        assert!(input_err < 1e-5, "input rel err {input_err}");
    }

    #[test]
    fn infer_matches_forward() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let mut block = TransformerBlock::new(&mut rng, 4, 1, 6);
        let x = array![[0.3, 0.1, -0.4, 0.9], [0.0, 0.2, 0.6, -0.1]];
        let a = block.infer(&x);
        let b = block.forward(&x);
        assert_eq!(a, b);
    }
}
