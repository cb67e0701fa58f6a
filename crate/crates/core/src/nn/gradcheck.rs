//! Central finite-difference verification of analytic gradients.

use ndarray::ArrayView2;
use rand::seq::index::sample;

use super::mlp::{Gradients, Mlp};
use crate::rng;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Gradients smaller than this in both routes are compared absolutely.
const MAGNITUDE_FLOOR: f64 = 1e-7;

/// Compares `analytic` against central differences of `objective` on up to
/// `max_params` randomly chosen coordinates (all of them if the model is
/// smaller). Returns the largest relative error seen.
pub fn check_with<F>(
    model: &Mlp,
    analytic: &Gradients,
    objective: F,
    max_params: usize,
    step: f64,
    seed: u64,
) -> f64
where
    F: Fn(&Mlp) -> f64,
{
    let n = model.param_count();
    let mut rng = rng::from_seed(seed);
    let indices: Vec<usize> = if max_params >= n {
        (0..n).collect()
    } else {
        let mut v = sample(&mut rng, n, max_params).into_vec();
        v.sort_unstable();
        v
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for i in indices {
        let orig = model.param(i);
        probe.set_param(i, orig + step);
        let up = objective(&probe);
        probe.set_param(i, orig - step);
        let down = objective(&probe);
        probe.set_param(i, orig);
        let numeric = (up - down) / (2.0 * step);
        let a = analytic.param(i);
        let err = (a - numeric).abs() / (a.abs() + numeric.abs()).max(MAGNITUDE_FLOOR);
        worst = worst.max(err);
    }
    worst
}

/// Finite-difference check of the (weighted) cross-entropy gradient.
pub fn gradient_check(
    model: &Mlp,
    x: ArrayView2<f64>,
    labels: &[usize],
    sample_weights: Option<&[f64]>,
    max_params: usize,
    seed: u64,
) -> crate::Result<f64> {
    let (_, analytic) = model.loss_gradients(x, labels, sample_weights)?;
    let objective = |m: &Mlp| {
        m.loss_gradients(x, labels, sample_weights)
            .map(|(l, _)| l)
            .unwrap_or(f64::NAN)
    };
    Ok(check_with(
        model,
        &analytic,
        objective,
        max_params,
        DEFAULT_STEP,
        seed,
    ))
}
