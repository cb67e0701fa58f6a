use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Features with possibly corrupted labels, plus the hidden ground truth.
///
/// Training code only ever sees a [`TrainView`]; the true labels are read by
/// evaluators through [`NoisyDataset::true_labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    features: Array2<f64>,
    noisy_labels: Vec<usize>,
    true_labels: Vec<usize>,
    num_classes: usize,
    pub split: Split,
}

/// Label-free-of-ground-truth view handed to trainers.
#[derive(Debug, Clone, Copy)]
pub struct TrainView<'a> {
    pub features: ArrayView2<'a, f64>,
    pub noisy_labels: &'a [usize],
    pub num_classes: usize,
}

impl<'a> TrainView<'a> {
    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

impl NoisyDataset {
    pub fn new(
        features: Array2<f64>,
        noisy_labels: Vec<usize>,
        true_labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        let n = features.nrows();
        if noisy_labels.len() != n || true_labels.len() != n {
            return Err(Error::dim(format!(
                "{n} feature rows but {} noisy and {} true labels",
                noisy_labels.len(),
                true_labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        if let Some(&y) = noisy_labels
            .iter()
            .chain(&true_labels)
            .find(|&&y| y >= num_classes)
        {
            return Err(Error::config(format!(
                "label {y} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("features must be finite"));
        }
        Ok(NoisyDataset {
            features,
            noisy_labels,
            true_labels,
            num_classes,
            split,
        })
    }

    /// A dataset whose noisy labels equal its true labels.
    pub fn clean(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        Self::new(features, labels.clone(), labels, num_classes, split)
    }

    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    /// Ground truth. Evaluators only.
    pub fn true_labels(&self) -> &[usize] {
        &self.true_labels
    }

    pub fn is_clean(&self) -> bool {
        self.noisy_labels == self.true_labels
    }

    /// Indices whose noisy label differs from the truth.
    pub fn flipped_count(&self) -> usize {
        self.noisy_labels
            .iter()
            .zip(&self.true_labels)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn view(&self) -> TrainView<'_> {
        TrainView {
            features: self.features.view(),
            noisy_labels: &self.noisy_labels,
            num_classes: self.num_classes,
        }
    }

    pub(crate) fn with_noisy_labels(&self, noisy_labels: Vec<usize>) -> Self {
        NoisyDataset {
            noisy_labels,
            ..self.clone()
        }
    }
}

/// Gaussian blob geometry shared by the train and test splits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub center_spread: f64,
    pub cluster_std: f64,
}

impl BlobSpec {
    fn validate(&self, n_per_class: usize) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "k must be at least 2, got {}",
                self.num_classes
            )));
        }
        if n_per_class == 0 {
            return Err(Error::config("n_per_class must be at least 1"));
        }
        if self.dim == 0 {
            return Err(Error::config("dim must be at least 1"));
        }
        if !(self.cluster_std > 0.0 && self.cluster_std.is_finite()) {
            return Err(Error::config(format!(
                "cluster_std must be positive, got {}",
                self.cluster_std
            )));
        }
        if !(self.center_spread >= 0.0 && self.center_spread.is_finite()) {
            return Err(Error::config("center_spread must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Class centers drawn uniformly from `[-spread, spread]^dim`, redrawn (up
    /// to a bounded number of attempts) until every pair is at least `spread` apart.
    pub fn centers(&self, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
        let s = self.center_spread;
        let draw = |rng: &mut rng::Rng| -> Vec<Vec<f64>> {
            (0..self.num_classes)
                .map(|_| {
                    (0..self.dim)
                        .map(|_| if s > 0.0 { rng.random_range(-s..s) } else { 0.0 })
                        .collect()
                })
                .collect()
        };
        let mut centers = draw(rng);
        for _ in 0..1000 {
            if min_pairwise_distance(&centers) >= s {
                break;
            }
            centers = draw(rng);
        }
        centers
    }

    fn sample(
        &self,
        centers: &[Vec<f64>],
        labels: Vec<usize>,
        rng: &mut rng::Rng,
        split: Split,
    ) -> NoisyDataset {
        let normal = Normal::new(0.0, self.cluster_std).expect("validated std");
        let n = labels.len();
        let mut x = Array2::zeros((n, self.dim));
        for (i, &c) in labels.iter().enumerate() {
            for j in 0..self.dim {
                x[[i, j]] = centers[c][j] + normal.sample(rng);
            }
        }
        NoisyDataset::clean(x, labels, self.num_classes, split).expect("labels in range")
    }
}

fn min_pairwise_distance(c: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..c.len() {
        for j in i + 1..c.len() {
            let d: f64 = c[i].iter().zip(&c[j]).map(|(a, b)| (a - b).powi(2)).sum();
            best = best.min(d.sqrt());
        }
    }
    best
}

/// `k` class-balanced Gaussian clusters; noisy labels equal true labels.
pub fn make_blobs(
    k: usize,
    n_per_class: usize,
    dim: usize,
    center_spread: f64,
    cluster_std: f64,
    seed: u64,
) -> Result<NoisyDataset> {
    let spec = BlobSpec {
        num_classes: k,
        dim,
        center_spread,
        cluster_std,
    };
    spec.validate(n_per_class)?;
    let mut rng = rng::from_seed(seed);
    let centers = spec.centers(&mut rng);
    let labels = (0..k).flat_map(|c| std::iter::repeat_n(c, n_per_class)).collect();
    Ok(spec.sample(&centers, labels, &mut rng, Split::Train))
}

/// Train and test splits drawn around the same centers. The train split is
/// class-balanced; test labels are assigned round-robin so `n_test` need not
/// be a multiple of `k`.
pub fn make_blobs_split(
    spec: BlobSpec,
    n_train_per_class: usize,
    n_test: usize,
    seed: u64,
) -> Result<(NoisyDataset, NoisyDataset)> {
    spec.validate(n_train_per_class)?;
    if n_test == 0 {
        return Err(Error::config("test split must be nonempty"));
    }
    let mut rng = rng::from_seed(seed);
    let centers = spec.centers(&mut rng);
    let k = spec.num_classes;
    let train_labels = (0..k)
        .flat_map(|c| std::iter::repeat_n(c, n_train_per_class))
        .collect();
    let train = spec.sample(&centers, train_labels, &mut rng, Split::Train);
    let test_labels = (0..n_test).map(|i| i % k).collect();
    let test = spec.sample(&centers, test_labels, &mut rng, Split::Test);
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_and_sized() {
        let ds = make_blobs(3, 100, 2, 5.0, 1.0, 1).unwrap();
        assert_eq!(ds.len(), 300);
        for c in 0..3 {
            assert_eq!(ds.true_labels().iter().filter(|&&y| y == c).count(), 100);
        }
        assert!(ds.is_clean());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_blobs(3, 50, 4, 5.0, 1.0, 9).unwrap();
        let b = make_blobs(3, 50, 4, 5.0, 1.0, 9).unwrap();
        let c = make_blobs(3, 50, 4, 5.0, 1.0, 10).unwrap();
        assert_eq!(a.features(), b.features());
        assert_ne!(a.features(), c.features());
    }

    #[test]
    fn tight_clusters_are_separable_by_nearest_center() {
        let ds = make_blobs(4, 50, 2, 5.0, 1e-6, 3).unwrap();
        let x = ds.features();
        let mut centers = vec![vec![0.0; 2]; 4];
        for (i, &y) in ds.true_labels().iter().enumerate() {
            for j in 0..2 {
                centers[y][j] += x[[i, j]] / 50.0;
            }
        }
        for (i, &y) in ds.true_labels().iter().enumerate() {
            let nearest = (0..4)
                .min_by(|&a, &b| {
                    let da: f64 = (0..2).map(|j| (x[[i, j]] - centers[a][j]).powi(2)).sum();
                    let db: f64 = (0..2).map(|j| (x[[i, j]] - centers[b][j]).powi(2)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            assert_eq!(nearest, y);
        }
    }

    #[test]
    fn invalid_sizes_are_rejected() {
        assert!(make_blobs(1, 10, 2, 5.0, 1.0, 0).is_err());
        assert!(make_blobs(3, 0, 2, 5.0, 1.0, 0).is_err());
        assert!(make_blobs(3, 10, 0, 5.0, 1.0, 0).is_err());
        assert!(make_blobs(3, 10, 2, 5.0, 0.0, 0).is_err());
    }

    #[test]
    fn split_shares_centers() {
        let spec = BlobSpec {
            num_classes: 3,
            dim: 2,
            center_spread: 5.0,
            cluster_std: 0.01,
        };
        let (train, test) = make_blobs_split(spec, 20, 10, 4).unwrap();
        assert_eq!(train.len(), 60);
        assert_eq!(test.len(), 10);
        assert_eq!(test.split, Split::Test);
        // test point of class c sits next to the train points of class c
        let d = (test.features()[[0, 0]] - train.features()[[0, 0]]).abs();
        assert!(d < 0.1);
    }

    #[test]
    fn view_hides_truth() {
        let ds = make_blobs(3, 5, 2, 5.0, 1.0, 1).unwrap();
        let v = ds.view();
        assert_eq!(v.len(), 15);
        assert_eq!(v.noisy_labels, ds.noisy_labels());
    }
}
