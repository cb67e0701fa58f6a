use rand::Rng as _;

use super::dataset::NoisyDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Row-stochastic label transition matrix: row `i` is the distribution of the
/// observed label given true class `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: Vec<Vec<f64>>,
    noise_rate: f64,
}

fn check_common(k: usize, tau: f64) -> Result<()> {
    if k < 2 {
        return Err(Error::config(format!("k must be at least 2, got {k}")));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(Error::config(format!("noise rate must lie in [0, 1), got {tau}")));
    }
    Ok(())
}

impl TransitionMatrix {
    /// Every wrong class equally likely: `T_ii = 1−τ`, `T_ij = τ/(k−1)`.
    pub fn symmetric(k: usize, tau: f64) -> Result<Self> {
        check_common(k, tau)?;
        let off = tau / (k - 1) as f64;
        let entries = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 - tau } else { off }).collect())
            .collect();
        Ok(TransitionMatrix {
            entries,
            noise_rate: tau,
        })
    }

    /// Each class flips to one fixed other class: `T_i,target(i) = τ`.
    pub fn asymmetric(k: usize, tau: f64, target_map: &[usize]) -> Result<Self> {
        check_common(k, tau)?;
        if target_map.len() != k {
            return Err(Error::config(format!(
                "target map has {} entries for {k} classes",
                target_map.len()
            )));
        }
        let mut seen = vec![false; k];
        for (i, &j) in target_map.iter().enumerate() {
            if j >= k {
                return Err(Error::config(format!("target {j} of class {i} out of range")));
            }
            if j == i {
                return Err(Error::config(format!("class {i} maps to itself")));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::config(format!(
                    "target map is not a permutation: class {j} is hit twice"
                )));
            }
        }
        let entries = (0..k)
            .map(|i| {
                let mut row = vec![0.0; k];
                row[i] = 1.0 - tau;
                row[target_map[i]] += tau;
                row
            })
            .collect();
        Ok(TransitionMatrix {
            entries,
            noise_rate: tau,
        })
    }

    /// Cyclic shift `i → (i+1) mod k`.
    pub fn cyclic_map(k: usize) -> Vec<usize> {
        (0..k).map(|i| (i + 1) % k).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.entries.len()
    }

    pub fn noise_rate(&self) -> f64 {
        self.noise_rate
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.entries
    }
}

/// Resamples every label from the transition row of its true class.
pub fn inject_noise(ds: &NoisyDataset, t: &TransitionMatrix, seed: u64) -> Result<NoisyDataset> {
    if t.num_classes() != ds.num_classes() {
        return Err(Error::config(format!(
            "transition matrix has {} classes, dataset has {}",
            t.num_classes(),
            ds.num_classes()
        )));
    }
    if !ds.is_clean() {
        return Err(Error::config("noise can only be injected into a clean dataset"));
    }
    let mut rng = rng::from_seed(seed);
    let noisy = ds
        .true_labels()
        .iter()
        .map(|&y| {
            let u: f64 = rng.random();
            let row = t.row(y);
            let mut acc = 0.0;
            for (j, &p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return j;
                }
            }
            // rounding left u above the last cumulative sum
            row.iter().rposition(|&p| p > 0.0).unwrap_or(y)
        })
        .collect();
    Ok(ds.with_noisy_labels(noisy))
}
