//! Oracles shared by integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

use cfdriver_core::learner::{Heads, LearnerModel, N_FLAGS, N_WAYPOINT_COORDS};
use cfdriver_core::rng;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Finite-difference denominators below this are treated as this.
pub const GRAD_FLOOR: f64 = 1e-4;

/// Random standardized inputs and targets for a batch of `rows`.
pub fn random_batch(model: &LearnerModel, rows: usize, seed: u64) -> (Array2<f64>, Heads) {
    let mut r = rng::stream(seed, &[0x6752]);
    let x = Array2::from_shape_fn((rows, model.input_dim()), |_| StandardNormal.sample(&mut r));
    let target = Heads {
        waypoints: Array2::from_shape_fn((rows, N_WAYPOINT_COORDS), |_| r.gen_range(-3.0..3.0)),
        grid: Array2::from_shape_fn((rows, model.grid_len), |_| if r.gen_bool(0.3) { 1.0 } else { 0.0 }),
        flags: Array2::from_shape_fn((rows, N_FLAGS), |_| if r.gen_bool(0.5) { 1.0 } else { 0.0 }),
    };
    (x, target)
}

/// Largest relative error between the analytic gradient and a central
/// difference with step `h`, over every parameter:
/// `|a - n| / max(|a|, |n|, GRAD_FLOOR)`.
pub fn max_grad_error(model: &LearnerModel, x: &Array2<f64>, target: &Heads, h: f64) -> f64 {
    let (_, grads) = model.loss_and_grad(x.view(), target).unwrap();
    let total = |m: &LearnerModel| m.loss_and_grad(x.view(), target).unwrap().0.total;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut compare = |analytic: f64, numeric: f64| {
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
        worst = worst.max(err);
    };
    for l in 0..model.layers.len() {
        for idx in ndarray::indices(model.layers[l].weights.raw_dim()) {
            let w0 = model.layers[l].weights[idx];
            probe.layers[l].weights[idx] = w0 + h;
            let up = total(&probe);
            probe.layers[l].weights[idx] = w0 - h;
            let down = total(&probe);
            probe.layers[l].weights[idx] = w0;
            compare(grads[l].0[idx], (up - down) / (2.0 * h));
        }
        for i in 0..model.layers[l].bias.len() {
            let b0 = model.layers[l].bias[i];
            probe.layers[l].bias[i] = b0 + h;
            let up = total(&probe);
            probe.layers[l].bias[i] = b0 - h;
            let down = total(&probe);
            probe.layers[l].bias[i] = b0;
            compare(grads[l].1[i], (up - down) / (2.0 * h));
        }
    }
    worst
}
