//! Additive self-attention pooling: `pooled = sum_i a_i h_i` with
//! `a = softmax(v . tanh(W h_i + b))`.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha12Rng;

use super::layers::{softmax_vec, Linear};
use super::param::{Param, Param1, ParamVisit, VisitParams};

#[derive(Debug, Clone)]
pub struct AdditivePool {
    score: Linear,
    v: Param1,
    cache: Option<PoolCache>,
}

#[derive(Debug, Clone)]
struct PoolCache {
    h: Array2<f64>,
    t: Array2<f64>,
    a: Array1<f64>,
}

impl AdditivePool {
    pub fn new(rng: &mut ChaCha12Rng, in_dim: usize, att_dim: usize) -> Self {
        AdditivePool {
            score: Linear::new(rng, in_dim, att_dim),
            v: Param::new(super::param::xavier_uniform(rng, 1, att_dim).row(0).to_owned()),
            cache: None,
        }
    }

    fn attend(&self, h: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
        let t = self.score.infer(h).mapv(f64::tanh);
        let scores: Array1<f64> = t.rows().into_iter().map(|row| row.dot(&self.v.v)).collect();
        (softmax_vec(&scores), t)
    }

    /// Attention weights and the pooled vector, inference path.
    pub fn infer(&self, h: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
        let (a, _) = self.attend(h);
        (a.clone(), self.mix(h, &a))
    }

    fn mix(&self, h: &Array2<f64>, a: &Array1<f64>) -> Array1<f64> {
        let mut pooled = Array1::zeros(h.ncols());
        for (row, weight) in h.rows().into_iter().zip(a.iter()) {
            pooled.scaled_add(*weight, &row);
        }
        pooled
    }

    pub fn forward(&mut self, h: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
        let t = self.score.forward(h).mapv(f64::tanh);
        let scores: Array1<f64> = t.rows().into_iter().map(|row| row.dot(&self.v.v)).collect();
        let a = softmax_vec(&scores);
        let pooled = self.mix(h, &a);
        self.cache = Some(PoolCache {
            h: h.clone(),
            t,
            a: a.clone(),
        });
        (a, pooled)
    }

    pub fn backward(&mut self, dpooled: &Array1<f64>) -> Array2<f64> {
        let cache = self.cache.take().expect("forward before backward");
        let (h, t, a) = (cache.h, cache.t, cache.a);
        // Pooled vector path.
        let da: Array1<f64> = h.rows().into_iter().map(|row| row.dot(dpooled)).collect();
        let mut dh = Array2::zeros(h.raw_dim());
        for ((mut dh_row, _), weight) in dh.rows_mut().into_iter().zip(h.rows()).zip(a.iter()) {
            dh_row.assign(&(dpooled * *weight));
        }
        // Softmax over token scores.
        let dot = (&a * &da).sum();
        let de: Array1<f64> = (0..a.len()).map(|i| a[i] * (da[i] - dot)).collect();
        // Score path: e_i = v . t_i.
        for (de_i, t_row) in de.iter().zip(t.rows()) {
            self.v.g += &(&t_row * *de_i);
        }
        let mut dt = Array2::zeros(t.raw_dim());
        for (mut dt_row, de_i) in dt.rows_mut().into_iter().zip(de.iter()) {
            dt_row.assign(&(&self.v.v * *de_i));
        }
        let dpre = &dt * &t.mapv(|x| 1.0 - x * x);
        dh + self.score.backward(&dpre)
    }
}

impl AdditivePool {
    /// Overwrite all weights with fixed values; only oracle tests that
    /// recompute the pooling by hand need this.
    pub fn set_weights_for_test(&mut self, w_row: &[f64], b: f64, v: f64) {
        assert_eq!(self.score.w.v.nrows(), 1, "single-score pool expected");
        for (slot, value) in self.score.w.v.row_mut(0).iter_mut().zip(w_row.iter()) {
            *slot = *value;
        }
        self.score.b.v[0] = b;
        self.v.v[0] = v;
    }
}

impl VisitParams for AdditivePool {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        self.score.visit_params(f);
        f(&mut self.v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_input_grad, check_model_grads};
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn weights_form_a_simplex() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let pool = AdditivePool::new(&mut rng, 3, 4);
        let h = array![[0.5, -0.2, 0.8], [0.1, 0.9, -0.5], [0.0, 0.1, 0.2]];
        let (a, _) = pool.infer(&h);
        assert!((a.sum() - 1.0).abs() < 1e-9);
        assert!(a.iter().all(|w| *w >= 0.0));
    }

    #[test]
    fn single_row_gets_weight_one() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let pool = AdditivePool::new(&mut rng, 3, 2);
        let h = array![[0.5, -0.2, 0.8]];
        let (a, pooled) = pool.infer(&h);
        assert_eq!(a.len(), 1);
        assert!((a[0] - 1.0).abs() < 1e-12);
        assert_eq!(pooled, h.row(0).to_owned());
    }

    #[test]
    fn pooled_vector_stays_in_the_convex_hull() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let pool = AdditivePool::new(&mut rng, 2, 3);
        let h = array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.5]];
        let (_, pooled) = pool.infer(&h);
        for (c, v) in pooled.iter().enumerate() {
            let lo = h.column(c).iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = h.column(c).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn pool_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut pool = AdditivePool::new(&mut rng, 3, 2);
        let h = array![[0.5, -0.2, 0.8], [0.1, 0.9, -0.5], [-0.3, 0.2, 0.6]];
        let train = |m: &mut AdditivePool, x: &Array2<f64>| {
            let (_, pooled) = m.forward(x);
            let dx = m.backward(&pooled.mapv(|v| 2.0 * v));
            (pooled.map(|v| v * v).sum(), dx)
        };
        let pure = |m: &mut AdditivePool, x: &Array2<f64>| {
            let (_, pooled) = m.infer(x);
            pooled.map(|v| v * v).sum()
        };
        let err = check_model_grads(&mut pool, |m, x| train(m, x).0, pure, &h, 1e-4);
        assert!(err < 1e-5, "param rel err {err}");
        let input_err = check_input_grad(&mut pool, train, pure, &h, 1e-4);
        assert!(input_err < 1e-5, "input rel err {input_err}");
    }
}
