//! Finite-difference gradient oracle.
//!
//! The oracle treats the loss as a black box over flat input vectors: it
//! never inspects the backward graph, so it stays independent of the
//! implementation it checks.

use crate::element::Element;
use crate::tensor::Tensor;

/// Central differences of `f` w.r.t. every coordinate of every input.
pub fn finite_diff<F>(f: &F, inputs: &[Vec<f64>], h: f64) -> Vec<Vec<f64>>
where
    F: Fn(&[Vec<f64>]) -> f64,
{
    let mut grads = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = vec![0.0; inputs[i].len()];
        for j in 0..inputs[i].len() {
            let mut bumped = inputs.to_vec();
            bumped[i][j] += h;
            let plus = f(&bumped);
            bumped[i][j] = inputs[i][j] - h;
            let minus = f(&bumped);
            g[j] = (plus - minus) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Symmetric relative error with an absolute floor so near-zero gradients
/// are compared absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-3)
}

/// Check a loss builder's analytic gradients against central differences.
///
/// `build` must construct the scalar loss from scratch each call so the
/// numeric path re-runs the full forward. Returns the worst relative error
/// over all coordinates of all inputs.
pub fn check_gradients<F>(build: F, shapes: &[Vec<usize>], inputs: &[Vec<f64>], h: f64) -> f64
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    assert_eq!(shapes.len(), inputs.len());
    let params: Vec<Tensor<f64>> = shapes
        .iter()
        .zip(inputs)
        .map(|(s, d)| Tensor::param(s, d.clone()).expect("test shapes agree"))
        .collect();
    let loss = build(&params);
    assert_eq!(loss.numel(), 1, "gradcheck loss must be scalar");
    loss.backward().expect("backward on test graph");
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let eval = |xs: &[Vec<f64>]| -> f64 {
        let ps: Vec<Tensor<f64>> = shapes
            .iter()
            .zip(xs)
            .map(|(s, d)| Tensor::param(s, d.clone()).expect("test shapes agree"))
            .collect();
        build(&ps).item().to_f64()
    };
    let numeric = finite_diff(&eval, inputs, h);

    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(&numeric) {
        for (&av, &nv) in a.iter().zip(n) {
            worst = worst.max(rel_err(av, nv));
        }
    }
    worst
}

/// Like [`check_gradients`] but bumps only a deterministic sample of
/// coordinates per input — for composed networks where exhaustive central
/// differences would dominate the suite's runtime.
pub fn check_gradients_sampled<F>(
    build: F,
    shapes: &[Vec<usize>],
    inputs: &[Vec<f64>],
    h: f64,
    coords_per_input: usize,
    seed: u64,
) -> f64
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    assert_eq!(shapes.len(), inputs.len());
    let params: Vec<Tensor<f64>> = shapes
        .iter()
        .zip(inputs)
        .map(|(s, d)| Tensor::param(s, d.clone()).expect("test shapes agree"))
        .collect();
    let loss = build(&params);
    assert_eq!(loss.numel(), 1, "gradcheck loss must be scalar");
    loss.backward().expect("backward on test graph");
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let eval = |xs: &[Vec<f64>]| -> f64 {
        let ps: Vec<Tensor<f64>> = shapes
            .iter()
            .zip(xs)
            .map(|(s, d)| Tensor::param(s, d.clone()).expect("test shapes agree"))
            .collect();
        build(&ps).item().to_f64()
    };

    let mut state = seed.wrapping_mul(0x2545_f491_4f6c_dd1d) | 1;
    let mut next = |n: usize| -> usize {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state % n as u64) as usize
    };

    let mut worst = 0.0f64;
    let mut bumped = inputs.to_vec();
    for i in 0..inputs.len() {
        let len = inputs[i].len();
        for _ in 0..coords_per_input.min(len) {
            let j = next(len);
            bumped[i][j] = inputs[i][j] + h;
            let plus = eval(&bumped);
            bumped[i][j] = inputs[i][j] - h;
            let minus = eval(&bumped);
            bumped[i][j] = inputs[i][j];
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i][j], numeric));
        }
    }
    worst
}

/// Deterministic pseudo-random vector for test inputs (no RNG dependency).
pub fn pseudo_random(len: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    (0..len)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            // map to roughly [-1, 1]
            (state >> 11) as f64 / (1u64 << 52) as f64 * 2.0 - 1.0
        })
        .collect()
}
