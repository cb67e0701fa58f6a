//! The maximal safe set and its per-batch evolution.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::memorization::PredictionHistory;

/// Samples currently believed to carry their true label.
///
/// Membership is a bitmap over `0..n`, so lookups are O(1) and iteration is
/// always in ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaximalSafeSet {
    member: Vec<bool>,
    size: usize,
    created_epoch: usize,
    total_added: usize,
    total_removed: usize,
}

/// Result of one evolution step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evolution {
    /// Batch samples outside the set that are now memorized.
    pub added: Vec<usize>,
    /// Batch samples inside the set that are no longer memorized.
    pub removed: Vec<usize>,
}

impl MaximalSafeSet {
    /// Seeds the set from the memorized indices at the transition epoch.
    /// Duplicate indices are collapsed.
    pub fn init(n: usize, seed: &[usize], created_epoch: usize) -> Result<Self> {
        let mut member = vec![false; n];
        for &i in seed {
            if i >= n {
                return Err(Error::dim(format!("seed index {i} out of range for {n} samples")));
            }
            member[i] = true;
        }
        let size = member.iter().filter(|&&m| m).count();
        Ok(MaximalSafeSet {
            member,
            size,
            created_epoch,
            total_added: 0,
            total_removed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn universe(&self) -> usize {
        self.member.len()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.member.get(i).copied().unwrap_or(false)
    }

    pub fn created_epoch(&self) -> usize {
        self.created_epoch
    }

    pub fn total_added(&self) -> usize {
        self.total_added
    }

    pub fn total_removed(&self) -> usize {
        self.total_removed
    }

    /// Members in ascending order.
    pub fn indices(&self) -> Vec<usize> {
        self.member
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
            .collect()
    }

    /// Applies `S ← (S ∪ C_new) \ R_new` for one mini-batch, reading the
    /// (already refreshed) prediction histories.
    pub fn evolve(
        &mut self,
        batch: &[usize],
        hist: &PredictionHistory,
        noisy_labels: &[usize],
    ) -> Result<Evolution> {
        let n = self.member.len();
        if hist.len() != n || noisy_labels.len() != n {
            return Err(Error::dim(
                "history, labels and safe set disagree on sample count",
            ));
        }
        if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
            return Err(Error::dim(format!("batch index {bad} out of range")));
        }
        let mut out = Evolution::default();
        // Decide against the pre-update membership, then apply.
        for &i in batch {
            let memorized = hist.is_memorized(i, noisy_labels[i]);
            match (self.member[i], memorized) {
                (false, true) => out.added.push(i),
                (true, false) => out.removed.push(i),
                _ => {}
            }
        }
        out.added.sort_unstable();
        out.added.dedup();
        out.removed.sort_unstable();
        out.removed.dedup();
        for &i in &out.added {
            self.member[i] = true;
        }
        for &i in &out.removed {
            self.member[i] = false;
        }
        self.size = self.size + out.added.len() - out.removed.len();
        self.total_added += out.added.len();
        self.total_removed += out.removed.len();
        Ok(out)
    }

    /// One index per line, ascending.
    pub fn to_index_list(&self) -> String {
        let mut s = String::new();
        for i in self.indices() {
            let _ = writeln!(s, "{i}");
        }
        s
    }
}

/// Parses the one-index-per-line export.
pub fn parse_index_list(text: &str) -> Result<Vec<usize>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad index {l:?}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn init_variants() {
        let s = MaximalSafeSet::init(6, &[0, 2, 5], 3).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.indices(), vec![0, 2, 5]);
        assert_eq!(s.created_epoch(), 3);
        assert!(MaximalSafeSet::init(6, &[], 0).unwrap().is_empty());
        assert_eq!(MaximalSafeSet::init(6, &[1, 1, 4], 0).unwrap().len(), 2);
        assert!(matches!(
            MaximalSafeSet::init(3, &[3], 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn unchanged_status_keeps_set() {
        let labels = vec![0, 1, 2, 0];
        let mut h = PredictionHistory::new(4, 3, 3).unwrap();
        h.record_epoch(&[0, 1, 0, 1]).unwrap();
        // memorized: 0, 1
        let mut s = MaximalSafeSet::init(4, &[0, 1], 0).unwrap();
        let ev = s.evolve(&[0, 1, 2, 3], &h, &labels).unwrap();
        assert!(ev.added.is_empty() && ev.removed.is_empty());
        assert_eq!(s.indices(), vec![0, 1]);
    }

    #[test]
    fn empty_set_fills_with_memorized_batch() {
        let labels = vec![0, 1, 2, 0];
        let mut h = PredictionHistory::new(4, 3, 3).unwrap();
        h.record_epoch(&labels).unwrap();
        let mut s = MaximalSafeSet::init(4, &[], 0).unwrap();
        s.evolve(&[1, 3], &h, &labels).unwrap();
        assert_eq!(s.indices(), vec![1, 3]);
        assert_eq!(s.total_added(), 2);
    }

    #[test]
    fn out_of_range_batch_is_rejected() {
        let h = PredictionHistory::new(2, 3, 3).unwrap();
        let mut s = MaximalSafeSet::init(2, &[], 0).unwrap();
        assert!(s.evolve(&[2], &h, &[0, 0]).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut r = rng::from_seed(99);
        for _ in 0..100 {
            let (n, k, q) = (30, 3, 4);
            let noisy: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
            let mut h = PredictionHistory::new(n, q, k).unwrap();
            for _ in 0..r.random_range(1..7) {
                let p: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
                h.record_epoch(&p).unwrap();
            }
            let seed: Vec<usize> = (0..n).filter(|_| r.random_bool(0.5)).collect();
            let batch: Vec<usize> = (0..n).filter(|_| r.random_bool(0.4)).collect();
            let mut s = MaximalSafeSet::init(n, &seed, 0).unwrap();
            let before = s.clone();
            let ev = s.evolve(&batch, &h, &noisy).unwrap();

            let mem = |i: usize| {
                let b = h.buffer(i);
                let mut best = (0, 0);
                for y in 0..k {
                    let c = b.iter().filter(|&&v| v == y).count();
                    if c > best.1 {
                        best = (y, c);
                    }
                }
                best.0 == noisy[i]
            };
            let c_new: Vec<usize> = batch
                .iter()
                .copied()
                .filter(|&i| !before.contains(i) && mem(i))
                .collect();
            let r_new: Vec<usize> = batch
                .iter()
                .copied()
                .filter(|&i| before.contains(i) && !mem(i))
                .collect();
            assert_eq!(ev.added, c_new);
            assert_eq!(ev.removed, r_new);
            let expected: Vec<usize> = (0..n)
                .filter(|&i| (before.contains(i) || c_new.contains(&i)) && !r_new.contains(&i))
                .collect();
            assert_eq!(s.indices(), expected);
            assert_eq!(s.len(), before.len() + c_new.len() - r_new.len());
        }
    }

    #[test]
    fn index_list_round_trip() {
        let s = MaximalSafeSet::init(10, &[7, 1, 3], 0).unwrap();
        assert_eq!(s.to_index_list(), "1\n3\n7\n");
        assert_eq!(parse_index_list(&s.to_index_list()).unwrap(), vec![1, 3, 7]);
    }
}
