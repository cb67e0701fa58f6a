use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_distr::{Distribution, Normal};

use crate::rng::Rng;

/// Label-preserving perturbation: `x + N(0, jitter_std²)` per coordinate.
///
/// Stands in for image crops and flips on vector data.
pub fn augment(x: ArrayView1<f64>, jitter_std: f64, rng: &mut Rng) -> Array1<f64> {
    if jitter_std == 0.0 {
        return x.to_owned();
    }
    let normal = Normal::new(0.0, jitter_std).expect("jitter_std must be finite and >= 0");
    x.mapv(|v| v + normal.sample(rng))
}

/// Row-wise [`augment`] over a batch.
pub fn augment_batch(x: ArrayView2<f64>, jitter_std: f64, rng: &mut Rng) -> Array2<f64> {
    if jitter_std == 0.0 {
        return x.to_owned();
    }
    let normal = Normal::new(0.0, jitter_std).expect("jitter_std must be finite and >= 0");
    x.mapv(|v| v + normal.sample(rng))
}
