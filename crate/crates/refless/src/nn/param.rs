//! Trainable parameters and the Adam optimizer.

use ndarray::{Array, Array1, Array2, Dimension};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// One trainable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Param<D: Dimension> {
    pub v: Array<f64, D>,
    pub g: Array<f64, D>,
    m: Array<f64, D>,
    s: Array<f64, D>,
}

pub type Param1 = Param<ndarray::Ix1>;
pub type Param2 = Param<ndarray::Ix2>;

impl<D: Dimension> Param<D> {
    pub fn new(v: Array<f64, D>) -> Self {
        let g = Array::zeros(v.raw_dim());
        let m = Array::zeros(v.raw_dim());
        let s = Array::zeros(v.raw_dim());
        Param { v, g, m, s }
    }
}

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Element-level access to a parameter, used by the optimizer loop,
/// gradient export/import for data-parallel batches, and finite
/// differences.
pub trait ParamVisit {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn get(&self, i: usize) -> f64;
    fn set(&mut self, i: usize, value: f64);
    fn grad(&self, i: usize) -> f64;
    fn grad_slice(&self) -> &[f64];
    fn add_grad_slice(&mut self, grads: &[f64]);
    fn scale_grad(&mut self, factor: f64);
    fn zero_grad(&mut self);
    fn adam_step(&mut self, hp: &Adam, t: usize);
}

impl<D: Dimension> ParamVisit for Param<D> {
    fn len(&self) -> usize {
        self.v.len()
    }

    fn get(&self, i: usize) -> f64 {
        self.v.as_slice().expect("standard layout")[i]
    }

    fn set(&mut self, i: usize, value: f64) {
        self.v.as_slice_mut().expect("standard layout")[i] = value;
    }

    fn grad(&self, i: usize) -> f64 {
        self.g.as_slice().expect("standard layout")[i]
    }

    fn grad_slice(&self) -> &[f64] {
        self.g.as_slice().expect("standard layout")
    }

    fn add_grad_slice(&mut self, grads: &[f64]) {
        let slice = self.g.as_slice_mut().expect("standard layout");
        assert_eq!(slice.len(), grads.len(), "gradient shape mismatch");
        for (a, b) in slice.iter_mut().zip(grads.iter()) {
            *a += b;
        }
    }

    fn scale_grad(&mut self, factor: f64) {
        self.g.mapv_inplace(|g| g * factor);
    }

    fn zero_grad(&mut self) {
        self.g.fill(0.0);
    }

    fn adam_step(&mut self, hp: &Adam, t: usize) {
        let t = t as i32;
        let bias1 = 1.0 - hp.beta1.powi(t);
        let bias2 = 1.0 - hp.beta2.powi(t);
        ndarray::Zip::from(&mut self.v)
            .and(&self.g)
            .and(&mut self.m)
            .and(&mut self.s)
            .for_each(|v, &g, m, s| {
                *m = hp.beta1 * *m + (1.0 - hp.beta1) * g;
                *s = hp.beta2 * *s + (1.0 - hp.beta2) * g * g;
                let m_hat = *m / bias1;
                let s_hat = *s / bias2;
                *v -= hp.lr * m_hat / (s_hat.sqrt() + hp.eps);
            });
    }
}

/// Anything holding parameters reachable in a stable order.
pub trait VisitParams {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit));
}

pub fn zero_grads<M: VisitParams + ?Sized>(model: &mut M) {
    model.visit_params(&mut |p| p.zero_grad());
}

pub fn param_count<M: VisitParams + ?Sized>(model: &mut M) -> usize {
    let mut n = 0;
    model.visit_params(&mut |p| n += p.len());
    n
}

pub fn adam_step_all<M: VisitParams + ?Sized>(model: &mut M, hp: &Adam, t: usize) {
    model.visit_params(&mut |p| p.adam_step(hp, t));
}

pub fn scale_grads<M: VisitParams + ?Sized>(model: &mut M, factor: f64) {
    model.visit_params(&mut |p| p.scale_grad(factor));
}

/// Gradients flattened per parameter, in visit order.
pub fn export_grads<M: VisitParams + ?Sized>(model: &mut M) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    model.visit_params(&mut |p| out.push(p.grad_slice().to_vec()));
    out
}

/// Add previously exported gradients back in, in visit order.
pub fn add_grads<M: VisitParams + ?Sized>(model: &mut M, grads: &[Vec<f64>]) {
    let mut idx = 0;
    model.visit_params(&mut |p| {
        p.add_grad_slice(&grads[idx]);
        idx += 1;
    });
    assert_eq!(idx, grads.len(), "gradient bundle length mismatch");
}

pub fn max_abs_grad<M: VisitParams + ?Sized>(model: &mut M) -> f64 {
    let mut max = 0.0f64;
    model.visit_params(&mut |p| {
        for g in p.grad_slice() {
            max = max.max(g.abs());
        }
    });
    max
}

/// Xavier/Glorot uniform initialization for a (rows x cols) matrix.
pub fn xavier_uniform(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-limit..limit))
}

/// Small-normal initialization used for embedding tables.
pub fn normal_init(rng: &mut ChaCha12Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    // Box-Muller keeps the dependency surface small and the stream
    // reproducible.
    Array2::from_shape_fn((rows, cols), |_| {
        let u1: f64 = rng.random_range(f64::EPSILON..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    })
}

pub fn zeros1(n: usize) -> Array1<f64> {
    Array1::zeros(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn adam_moves_against_the_gradient() {
        let mut p = Param::new(array![1.0, -2.0]);
        p.g = array![0.5, -0.5];
        let hp = Adam::with_lr(0.1);
        p.adam_step(&hp, 1);
        assert!(p.v[0] < 1.0);
        assert!(p.v[1] > -2.0);
    }

    #[test]
    fn grad_export_import_round_trip() {
        struct Tiny {
            a: Param1,
            b: Param2,
        }
        impl VisitParams for Tiny {
            fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
                f(&mut self.a);
                f(&mut self.b);
            }
        }
        let mut m = Tiny {
            a: Param::new(array![1.0, 2.0]),
            b: Param::new(array![[3.0, 4.0], [5.0, 6.0]]),
        };
        m.a.g = array![0.1, 0.2];
        m.b.g = array![[1.0, 1.0], [1.0, 1.0]];
        let grads = export_grads(&mut m);
        add_grads(&mut m, &grads);
        assert_eq!(m.a.g, array![0.2, 0.4]);
        assert_eq!(param_count(&mut m), 6);
        zero_grads(&mut m);
        assert_eq!(max_abs_grad(&mut m), 0.0);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let mut r1 = ChaCha12Rng::seed_from_u64(9);
        let mut r2 = ChaCha12Rng::seed_from_u64(9);
        assert_eq!(xavier_uniform(&mut r1, 3, 4), xavier_uniform(&mut r2, 3, 4));
        assert_eq!(
            normal_init(&mut r1, 2, 2, 0.02),
            normal_init(&mut r2, 2, 2, 0.02)
        );
    }
}
