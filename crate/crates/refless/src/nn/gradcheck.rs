//! Central finite-difference verification of analytic gradients.
//!
//! Used throughout the test suites: every layer's backward pass is
//! checked against numeric differentiation on small instances.

use ndarray::Array2;

use super::param::{export_grads, zero_grads, ParamVisit, VisitParams};

fn with_param<M: VisitParams + ?Sized>(
    model: &mut M,
    target: usize,
    f: impl FnOnce(&mut dyn ParamVisit),
) {
    let mut idx = 0;
    let mut f = Some(f);
    model.visit_params(&mut |p| {
        if idx == target {
            if let Some(f) = f.take() {
                f(p);
            }
        }
        idx += 1;
    });
}

/// Norm-based relative error between an analytic gradient vector and its
/// numeric counterpart: `|a - n| / max(|a|, |n|)` in the L2 norm. This
/// dilutes unavoidable truncation noise on near-zero components.
pub fn vector_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    let mut diff = 0.0;
    let mut norm_a = 0.0;
    let mut norm_n = 0.0;
    for (a, n) in analytic.iter().zip(numeric.iter()) {
        diff += (a - n) * (a - n);
        norm_a += a * a;
        norm_n += n * n;
    }
    let diff = diff.sqrt();
    // Gradients that are mathematically zero (e.g. a bias the loss is
    // invariant to) show up as pure rounding noise on both sides.
    if diff <= 1e-10 {
        return 0.0;
    }
    let denom = norm_a.sqrt().max(norm_n.sqrt());
    if denom == 0.0 {
        return diff;
    }
    diff / denom
}

/// Compare analytic parameter gradients against central finite
/// differences and return the worst per-parameter relative error.
///
/// `run_train` must run the caching forward pass, call backward with the
/// loss gradient, and return the loss; `run_pure` must compute the same
/// loss without touching gradients (the `infer` path).
pub fn check_model_grads<M: VisitParams + ?Sized>(
    model: &mut M,
    run_train: impl Fn(&mut M, &Array2<f64>) -> f64,
    run_pure: impl Fn(&mut M, &Array2<f64>) -> f64,
    x: &Array2<f64>,
    eps: f64,
) -> f64 {
    zero_grads(model);
    let _ = run_train(model, x);
    let analytic = export_grads(model);

    let mut worst = 0.0f64;
    for (param_idx, grads) in analytic.iter().enumerate() {
        let mut numeric = Vec::with_capacity(grads.len());
        for elem in 0..grads.len() {
            let mut original = 0.0;
            with_param(model, param_idx, |p| {
                original = p.get(elem);
                p.set(elem, original + eps);
            });
            let plus = run_pure(model, x);
            with_param(model, param_idx, |p| p.set(elem, original - eps));
            let minus = run_pure(model, x);
            with_param(model, param_idx, |p| p.set(elem, original));
            numeric.push((plus - minus) / (2.0 * eps));
        }
        worst = worst.max(vector_relative_error(grads, &numeric));
    }
    worst
}

/// Compare the analytic input gradient against finite differences on the
/// input and return the norm relative error. `run_train` returns the
/// loss and the input gradient from backward.
pub fn check_input_grad<M: VisitParams + ?Sized>(
    model: &mut M,
    run_train: impl Fn(&mut M, &Array2<f64>) -> (f64, Array2<f64>),
    run_pure: impl Fn(&mut M, &Array2<f64>) -> f64,
    x: &Array2<f64>,
    eps: f64,
) -> f64 {
    zero_grads(model);
    let (_, dx) = run_train(model, x);
    let mut numeric = Vec::with_capacity(x.len());
    let mut analytic = Vec::with_capacity(x.len());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut xp = x.clone();
            xp[[i, j]] += eps;
            let plus = run_pure(model, &xp);
            let mut xm = x.clone();
            xm[[i, j]] -= eps;
            let minus = run_pure(model, &xm);
            numeric.push((plus - minus) / (2.0 * eps));
            analytic.push(dx[[i, j]]);
        }
    }
    vector_relative_error(&analytic, &numeric)
}
