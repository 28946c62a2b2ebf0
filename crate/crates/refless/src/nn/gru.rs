//! GRU cells, sequence runs with backprop through time, and the
//! bidirectional layer.

use ndarray::{s, Array1, Array2};
use rand_chacha::ChaCha12Rng;

use super::param::{xavier_uniform, zeros1, Param, Param1, Param2, ParamVisit, VisitParams};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate preactivations are stacked `[reset; update; candidate]`.
#[derive(Debug, Clone)]
pub struct GruCell {
    pub wx: Param2,
    pub wh: Param2,
    pub bx: Param1,
    pub bh: Param1,
    hidden: usize,
    cache: Vec<GruStepCache>,
}

#[derive(Debug, Clone)]
struct GruStepCache {
    x: Array1<f64>,
    h_prev: Array1<f64>,
    r: Array1<f64>,
    z: Array1<f64>,
    n: Array1<f64>,
    hn: Array1<f64>,
}

impl GruCell {
    pub fn new(rng: &mut ChaCha12Rng, input: usize, hidden: usize) -> Self {
        GruCell {
            wx: Param::new(xavier_uniform(rng, 3 * hidden, input)),
            wh: Param::new(xavier_uniform(rng, 3 * hidden, hidden)),
            bx: Param::new(zeros1(3 * hidden)),
            bh: Param::new(zeros1(3 * hidden)),
            hidden,
            cache: Vec::new(),
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn step(
        &self,
        x: &Array1<f64>,
        h_prev: &Array1<f64>,
    ) -> (Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>) {
        let h = self.hidden;
        let px = self.wx.v.dot(x) + &self.bx.v;
        let ph = self.wh.v.dot(h_prev) + &self.bh.v;
        let r: Array1<f64> = (0..h).map(|i| sigmoid(px[i] + ph[i])).collect();
        let z: Array1<f64> = (0..h).map(|i| sigmoid(px[h + i] + ph[h + i])).collect();
        let hn: Array1<f64> = (0..h).map(|i| ph[2 * h + i]).collect();
        let n: Array1<f64> = (0..h)
            .map(|i| (px[2 * h + i] + r[i] * hn[i]).tanh())
            .collect();
        let h_new: Array1<f64> = (0..h)
            .map(|i| (1.0 - z[i]) * n[i] + z[i] * h_prev[i])
            .collect();
        (h_new, r, z, n, hn)
    }

    /// Run the whole sequence (rows of `xs`), returning per-step hidden
    /// states. The initial state is zero.
    pub fn run(&self, xs: &Array2<f64>) -> Array2<f64> {
        let t = xs.nrows();
        let mut states = Array2::zeros((t, self.hidden));
        let mut h = Array1::zeros(self.hidden);
        for i in 0..t {
            let (h_new, ..) = self.step(&xs.row(i).to_owned(), &h);
            states.row_mut(i).assign(&h_new);
            h = h_new;
        }
        states
    }

    /// Caching version of [`GruCell::run`] for training.
    pub fn run_train(&mut self, xs: &Array2<f64>) -> Array2<f64> {
        let t = xs.nrows();
        self.cache.clear();
        let mut states = Array2::zeros((t, self.hidden));
        let mut h = Array1::zeros(self.hidden);
        for i in 0..t {
            let x = xs.row(i).to_owned();
            let (h_new, r, z, n, hn) = self.step(&x, &h);
            states.row_mut(i).assign(&h_new);
            self.cache.push(GruStepCache {
                x,
                h_prev: h,
                r,
                z,
                n,
                hn,
            });
            h = h_new;
        }
        states
    }

    /// Backprop through time. `dstates` holds the loss gradient w.r.t.
    /// every per-step hidden state; returns the input gradient.
    pub fn backward(&mut self, dstates: &Array2<f64>) -> Array2<f64> {
        let t = dstates.nrows();
        assert_eq!(t, self.cache.len(), "cache/sequence length mismatch");
        let h = self.hidden;
        let mut dx_all = Array2::zeros((t, self.wx.v.ncols()));
        let mut dh_next = Array1::zeros(h);
        for i in (0..t).rev() {
            let cache = &self.cache[i];
            let dh: Array1<f64> = &dstates.row(i) + &dh_next;
            let mut da_x = Array1::zeros(3 * h);
            let mut da_h = Array1::zeros(3 * h);
            let mut dh_prev: Array1<f64> = Array1::zeros(h);
            for j in 0..h {
                let (r, z, n, hn) = (cache.r[j], cache.z[j], cache.n[j], cache.hn[j]);
                let dz = dh[j] * (cache.h_prev[j] - n);
                let dn = dh[j] * (1.0 - z);
                let da_n = dn * (1.0 - n * n);
                let dr = da_n * hn;
                let dhn = da_n * r;
                let da_r = dr * r * (1.0 - r);
                let da_z = dz * z * (1.0 - z);
                da_x[j] = da_r;
                da_x[h + j] = da_z;
                da_x[2 * h + j] = da_n;
                da_h[j] = da_r;
                da_h[h + j] = da_z;
                da_h[2 * h + j] = dhn;
                dh_prev[j] = dh[j] * z;
            }
            // Rank-1 accumulation into the stacked gate matrices.
            for (gj, &g) in da_x.iter().enumerate() {
                if g != 0.0 {
                    let mut row = self.wx.g.row_mut(gj);
                    row += &(&cache.x * g);
                }
            }
            for (gj, &g) in da_h.iter().enumerate() {
                if g != 0.0 {
                    let mut row = self.wh.g.row_mut(gj);
                    row += &(&cache.h_prev * g);
                }
            }
            self.bx.g += &da_x;
            self.bh.g += &da_h;
            dx_all.row_mut(i).assign(&self.wx.v.t().dot(&da_x));
            dh_next = self.wh.v.t().dot(&da_h) + &dh_prev;
        }
        self.cache.clear();
        dx_all
    }
}

impl VisitParams for GruCell {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        f(&mut self.wx);
        f(&mut self.wh);
        f(&mut self.bx);
        f(&mut self.bh);
    }
}

/// Bidirectional GRU layer: forward and backward passes concatenated per
/// token into a `T x 2h` state matrix.
#[derive(Debug, Clone)]
pub struct BiGruLayer {
    pub fwd: GruCell,
    pub bwd: GruCell,
}

fn reverse_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.raw_dim());
    let t = x.nrows();
    for i in 0..t {
        out.row_mut(i).assign(&x.row(t - 1 - i));
    }
    out
}

impl BiGruLayer {
    pub fn new(rng: &mut ChaCha12Rng, input: usize, hidden: usize) -> Self {
        BiGruLayer {
            fwd: GruCell::new(rng, input, hidden),
            bwd: GruCell::new(rng, input, hidden),
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden()
    }

    fn concat(&self, fwd_states: &Array2<f64>, bwd_states_rev: &Array2<f64>) -> Array2<f64> {
        let t = fwd_states.nrows();
        let h = self.fwd.hidden();
        let mut out = Array2::zeros((t, 2 * h));
        out.slice_mut(s![.., ..h]).assign(fwd_states);
        out.slice_mut(s![.., h..]).assign(&reverse_rows(bwd_states_rev));
        out
    }

    pub fn infer(&self, xs: &Array2<f64>) -> Array2<f64> {
        let fwd_states = self.fwd.run(xs);
        let bwd_states = self.bwd.run(&reverse_rows(xs));
        self.concat(&fwd_states, &bwd_states)
    }

    pub fn forward(&mut self, xs: &Array2<f64>) -> Array2<f64> {
        let fwd_states = self.fwd.run_train(xs);
        let bwd_states = self.bwd.run_train(&reverse_rows(xs));
        self.concat(&fwd_states, &bwd_states)
    }

    pub fn backward(&mut self, dstates: &Array2<f64>) -> Array2<f64> {
        let h = self.fwd.hidden();
        let d_fwd = dstates.slice(s![.., ..h]).to_owned();
        let d_bwd = reverse_rows(&dstates.slice(s![.., h..]).to_owned());
        let dx_fwd = self.fwd.backward(&d_fwd);
        let dx_bwd = reverse_rows(&self.bwd.backward(&d_bwd));
        dx_fwd + dx_bwd
    }
}

impl VisitParams for BiGruLayer {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut dyn ParamVisit)) {
        self.fwd.visit_params(f);
        self.bwd.visit_params(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_input_grad, check_model_grads};
    use ndarray::array;
    use rand::SeedableRng;

    #[test]
    fn single_unit_step_matches_scalar_formulas() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let mut cell = GruCell::new(&mut rng, 1, 1);
        cell.wx.v = array![[0.5], [0.3], [0.2]];
        cell.wh.v = array![[0.1], [0.4], [0.6]];
        cell.bx.v = array![0.01, 0.02, 0.03];
        cell.bh.v = array![0.04, 0.05, 0.06];
        let x = 1.0;
        let h0 = 0.0;
        let r = sigmoid(0.5 * x + 0.01 + 0.1 * h0 + 0.04);
        let z = sigmoid(0.3 * x + 0.02 + 0.4 * h0 + 0.05);
        let n = (0.2 * x + 0.03 + r * (0.6 * h0 + 0.06)).tanh();
        let expected = (1.0 - z) * n + z * h0;
        let states = cell.run(&array![[x]]);
        assert!((states[[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn gru_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut cell = GruCell::new(&mut rng, 3, 2);
        let xs = array![
            [0.5, -0.2, 0.8],
            [0.1, 0.9, -0.5],
            [-0.7, 0.3, 0.2],
            [0.4, -0.6, 0.1]
        ];
        let train = |m: &mut GruCell, x: &Array2<f64>| {
            let states = m.run_train(x);
            let dx = m.backward(&states.mapv(|v| 2.0 * v));
            (states.map(|v| v * v).sum(), dx)
        };
        let pure = |m: &mut GruCell, x: &Array2<f64>| m.run(x).map(|v| v * v).sum();
        let err = check_model_grads(&mut cell, |m, x| train(m, x).0, pure, &xs, 1e-4);
        assert!(err < 1e-5, "param rel err {err}");
        let input_err = check_input_grad(&mut cell, train, pure, &xs, 1e-4);
        assert!(input_err < 1e-5, "input rel err {input_err}");
    }

    #[test]
    fn bigru_output_width_is_twice_hidden() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let layer = BiGruLayer::new(&mut rng, 3, 4);
        let xs = array![[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]];
        assert_eq!(layer.infer(&xs).dim(), (2, 8));
    }

    #[test]
    fn bigru_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut layer = BiGruLayer::new(&mut rng, 2, 2);
        let xs = array![[0.5, -0.2], [0.1, 0.9], [-0.7, 0.3]];
        let train = |m: &mut BiGruLayer, x: &Array2<f64>| {
            let states = m.forward(x);
            let dx = m.backward(&states.mapv(|v| 2.0 * v));
            (states.map(|v| v * v).sum(), dx)
        };
        let pure = |m: &mut BiGruLayer, x: &Array2<f64>| m.infer(x).map(|v| v * v).sum();
        let err = check_model_grads(&mut layer, |m, x| train(m, x).0, pure, &xs, 1e-4);
        assert!(err < 1e-5, "param rel err {err}");
        let input_err = check_input_grad(&mut layer, train, pure, &xs, 1e-4);
        assert!(input_err < 1e-5, "input rel err {input_err}");
    }

    #[test]
    fn infer_matches_train_forward() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let mut layer = BiGruLayer::new(&mut rng, 2, 3);
        let xs = array![[0.5, -0.2], [0.1, 0.9]];
        assert_eq!(layer.infer(&xs), layer.forward(&xs));
    }
}
