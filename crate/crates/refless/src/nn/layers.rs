//! Dense, layer-norm, activation and softmax building blocks.
//!
//! Every layer has a caching `forward` used during training, a pure
//! `infer` used for read-only prediction, and a `backward` that consumes
//! the cache and accumulates parameter gradients.

use ndarray::{Array1, Array2, Axis};
use rand_chacha::ChaCha12Rng;

use super::param::{xavier_uniform, zeros1, Param, Param1, Param2, ParamVisit, VisitParams};

/// Fully connected layer over row vectors: `y = x W^T + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param2,
    pub b: Param1,
    cache_x: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(rng: &mut ChaCha12Rng, in_dim: usize, out_dim: usize) -> Self {
        Linear {
            w: Param::new(xavier_uniform(rng, out_dim, in_dim)),
            b: Param::new(zeros1(out_dim)),
            cache_x: None,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.w.v.nrows()
    }

    pub fn infer(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.v.t()) + &self.b.v
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        self.cache_x = Some(x.clone());
        self.infer(x)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache_x.take().expect("forward before backward");
        self.w.g += &dy.t().dot(&x);
        self.b.g += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.v)
    }
}

impl VisitParams for Linear {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        f(&mut self.w);
        f(&mut self.b);
    }
}

/// Per-row layer normalization with learned scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Param1,
    pub beta: Param1,
    pub eps: f64,
    cache: Option<(Array2<f64>, Array1<f64>)>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Param::new(Array1::ones(dim)),
            beta: Param::new(zeros1(dim)),
            eps: 1e-5,
            cache: None,
        }
    }

    fn normalize(&self, x: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let d = x.ncols() as f64;
        let mean = x.mean_axis(Axis(1)).expect("nonempty rows");
        let mut xhat = x.clone();
        for (mut row, mu) in xhat.rows_mut().into_iter().zip(mean.iter()) {
            row.mapv_inplace(|v| v - mu);
        }
        let inv_std: Array1<f64> = xhat
            .rows()
            .into_iter()
            .map(|row| {
                let var = row.iter().map(|v| v * v).sum::<f64>() / d;
                1.0 / (var + self.eps).sqrt()
            })
            .collect();
        for (mut row, s) in xhat.rows_mut().into_iter().zip(inv_std.iter()) {
            row.mapv_inplace(|v| v * s);
        }
        (xhat, inv_std)
    }

    pub fn infer(&self, x: &Array2<f64>) -> Array2<f64> {
        let (xhat, _) = self.normalize(x);
        xhat * &self.gamma.v + &self.beta.v
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let (xhat, inv_std) = self.normalize(x);
        let y = &xhat * &self.gamma.v + &self.beta.v;
        self.cache = Some((xhat, inv_std));
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let (xhat, inv_std) = self.cache.take().expect("forward before backward");
        let d = dy.ncols() as f64;
        for (dy_row, xhat_row) in dy.rows().into_iter().zip(xhat.rows()) {
            self.gamma.g += &(&dy_row * &xhat_row);
            self.beta.g += &dy_row;
        }
        let mut dx = Array2::zeros(dy.raw_dim());
        for ((mut dx_row, dy_row), (xhat_row, s)) in dx
            .rows_mut()
            .into_iter()
            .zip(dy.rows())
            .zip(xhat.rows().into_iter().zip(inv_std.iter()))
        {
            let dyg: Array1<f64> = (&dy_row * &self.gamma.v).to_owned();
            let mean_dyg = dyg.sum() / d;
            let mean_dyg_xhat = (&dyg * &xhat_row).sum() / d;
            for (i, out) in dx_row.iter_mut().enumerate() {
                *out = s * (dyg[i] - mean_dyg - xhat_row[i] * mean_dyg_xhat);
            }
        }
        dx
    }
}

impl VisitParams for LayerNorm {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Elementwise GELU (tanh approximation).
#[derive(Debug, Clone, Default)]
pub struct Gelu {
    cache_x: Option<Array2<f64>>,
}

impl Gelu {
    pub fn infer(&self, x: &Array2<f64>) -> Array2<f64> {
        x.mapv(gelu)
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        self.cache_x = Some(x.clone());
        self.infer(x)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache_x.take().expect("forward before backward");
        dy * &x.mapv(gelu_grad)
    }
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut y = x.clone();
    for mut row in y.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    y
}

/// Row-wise softmax Jacobian application: given y = softmax(x) and dy,
/// returns dx = y * (dy - sum(dy * y)).
pub fn softmax_backward_rows(y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = Array2::zeros(y.raw_dim());
    for ((mut dx_row, y_row), dy_row) in dx
        .rows_mut()
        .into_iter()
        .zip(y.rows())
        .zip(dy.rows())
    {
        let dot = (&y_row * &dy_row).sum();
        for (i, out) in dx_row.iter_mut().enumerate() {
            *out = y_row[i] * (dy_row[i] - dot);
        }
    }
    dx
}

pub fn softmax_vec(x: &Array1<f64>) -> Array1<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut y = x.mapv(|v| (v - max).exp());
    let sum = y.sum();
    y.mapv_inplace(|v| v / sum);
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_input_grad, check_model_grads};
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn linear_forward_matches_hand_arithmetic() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut layer = Linear::new(&mut rng, 2, 1);
        layer.w.v = array![[0.5, 0.25]];
        layer.b.v = array![0.1];
        let y = layer.infer(&array![[1.0, 2.0]]);
        assert!((y[[0, 0]] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut layer = Linear::new(&mut rng, 3, 2);
        let x = array![[0.3, -0.7, 1.1], [0.9, 0.2, -0.4]];
        let max_err = check_model_grads(
            &mut layer,
            |l, x| {
                let y = l.forward(x);
                l.backward(&y.mapv(|v| 2.0 * v));
                y.map(|v| v * v).sum()
            },
            |l, x| l.infer(x).map(|v| v * v).sum(),
            &x,
            1e-4,
        );
        assert!(max_err < 1e-6, "max rel err {max_err}");
    }

    #[test]
    fn layernorm_rows_are_standardized() {
        let ln = LayerNorm::new(4);
        let y = ln.infer(&array![[1.0, 2.0, 3.0, 4.0], [10.0, 10.0, 10.0, 14.0]]);
        for row in y.rows() {
            assert!(row.sum().abs() < 1e-9);
        }
    }

    #[test]
    fn layernorm_gradients_match_finite_differences() {
        let mut ln = LayerNorm::new(3);
        ln.gamma.v = array![1.3, 0.7, -0.5];
        ln.beta.v = array![0.1, -0.2, 0.3];
        let x = array![[0.5, -1.0, 2.0], [1.5, 0.0, -0.7]];
        let train = |l: &mut LayerNorm, x: &Array2<f64>| {
            let y = l.forward(x);
            let dx = l.backward(&y.clone());
            (y.map(|v| v * v * 0.5).sum(), dx)
        };
        let pure = |l: &mut LayerNorm, x: &Array2<f64>| l.infer(x).map(|v| v * v * 0.5).sum();
        let max_err = check_model_grads(&mut ln, |l, x| train(l, x).0, pure, &x, 1e-4);
        assert!(max_err < 1e-6, "max rel err {max_err}");
        let input_err = check_input_grad(&mut ln, train, pure, &x, 1e-4);
        assert!(input_err < 1e-6, "input rel err {input_err}");
    }

    #[test]
    fn gelu_matches_reference_points() {
        // gelu(0) = 0, gelu is odd-ish around zero, gelu(3) ~ 3.
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(3.0) - 2.9959).abs() < 1e-3);
        assert!(gelu(-3.0).abs() < 0.01);
    }

    #[test]
    fn gelu_gradient_matches_finite_differences() {
        for x in [-2.0, -0.5, 0.0, 0.3, 1.7] {
            let eps = 1e-6;
            let num = (gelu(x + eps) - gelu(x - eps)) / (2.0 * eps);
            assert!((gelu_grad(x) - num).abs() < 1e-8, "x = {x}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_and_backward_checks() {
        let x = array![[0.1, 2.0, -1.0], [5.0, 5.0, 5.0]];
        let y = softmax_rows(&x);
        for row in y.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
        // Finite-difference check of the softmax Jacobian through a
        // fixed quadratic readout.
        let eps = 1e-6;
        let loss = |x: &Array2<f64>| softmax_rows(x).map(|v| v * v).sum();
        let y = softmax_rows(&x);
        let dy = y.mapv(|v| 2.0 * v);
        let dx = softmax_backward_rows(&y, &dy);
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let mut xp = x.clone();
                xp[[i, j]] += eps;
                let mut xm = x.clone();
                xm[[i, j]] -= eps;
                let num = (loss(&xp) - loss(&xm)) / (2.0 * eps);
                assert!((dx[[i, j]] - num).abs() < 1e-6);
            }
        }
    }
}
