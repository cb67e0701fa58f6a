//! Prediction histories, the memorized set, and recall/precision of
//! memorized or selected index sets against the hidden ground truth.

use crate::error::{Error, Result};

/// Ring buffer of the last `q` epoch-level predicted labels for every sample.
///
/// All samples are recorded together once per epoch, so they share a fill
/// count; [`PredictionHistory::overwrite_latest`] refreshes a single sample's
/// newest slot between epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionHistory {
    q: usize,
    num_classes: usize,
    n: usize,
    slots: Vec<u32>,
    next: usize,
    fill: usize,
    epoch: usize,
}

impl PredictionHistory {
    pub fn new(n: usize, q: usize, num_classes: usize) -> Result<Self> {
        if q == 0 {
            return Err(Error::config("history length q must be at least 1"));
        }
        if num_classes < 2 {
            return Err(Error::config("need at least 2 classes"));
        }
        Ok(PredictionHistory {
            q,
            num_classes,
            n,
            slots: vec![0; n * q],
            next: 0,
            fill: 0,
            epoch: 0,
        })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Number of stored predictions per sample (at most `q`).
    pub fn fill(&self) -> usize {
        self.fill
    }

    /// Number of epochs recorded so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn check_label(&self, y: usize) -> Result<()> {
        if y >= self.num_classes {
            return Err(Error::dim(format!(
                "label {y} out of range for {} classes",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Appends one epoch of predictions, evicting the oldest once `q` are stored.
    pub fn record_epoch(&mut self, predicted: &[usize]) -> Result<()> {
        if predicted.len() != self.n {
            return Err(Error::dim(format!(
                "{} predictions for {} samples",
                predicted.len(),
                self.n
            )));
        }
        for &y in predicted {
            self.check_label(y)?;
        }
        for (i, &y) in predicted.iter().enumerate() {
            self.slots[i * self.q + self.next] = y as u32;
        }
        self.next = (self.next + 1) % self.q;
        self.fill = (self.fill + 1).min(self.q);
        self.epoch += 1;
        Ok(())
    }

    /// Replaces sample `i`'s most recent prediction.
    pub fn overwrite_latest(&mut self, i: usize, predicted: usize) -> Result<()> {
        if i >= self.n {
            return Err(Error::dim(format!("sample {i} out of range")));
        }
        self.check_label(predicted)?;
        if self.fill == 0 {
            return Err(Error::NotReady("no epoch recorded yet".into()));
        }
        let latest = (self.next + self.q - 1) % self.q;
        self.slots[i * self.q + latest] = predicted as u32;
        Ok(())
    }

    /// Stored predictions of sample `i`, oldest first.
    pub fn buffer(&self, i: usize) -> Vec<usize> {
        let start = (self.next + self.q - self.fill) % self.q;
        (0..self.fill)
            .map(|s| self.slots[i * self.q + (start + s) % self.q] as usize)
            .collect()
    }

    fn counts(&self, i: usize) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        let row = &self.slots[i * self.q..(i + 1) * self.q];
        // Slots outside the filled region are stale; only the first `fill`
        // written positions are meaningful.
        let start = (self.next + self.q - self.fill) % self.q;
        for s in 0..self.fill {
            counts[row[(start + s) % self.q] as usize] += 1;
        }
        counts
    }

    /// Fraction of stored predictions of sample `i` equal to `y`.
    pub fn label_prob(&self, i: usize, y: usize) -> Result<f64> {
        if i >= self.n {
            return Err(Error::dim(format!("sample {i} out of range")));
        }
        self.check_label(y)?;
        if self.fill == 0 {
            return Err(Error::NotReady("empty prediction history".into()));
        }
        Ok(self.counts(i)[y] as f64 / self.fill as f64)
    }

    /// Most frequent stored label of sample `i` (lowest class on ties), or
    /// `None` before the first recorded epoch.
    pub fn majority_label(&self, i: usize) -> Option<usize> {
        if self.fill == 0 {
            return None;
        }
        let counts = self.counts(i);
        let mut best = 0;
        for (c, &n) in counts.iter().enumerate() {
            if n > counts[best] {
                best = c;
            }
        }
        Some(best)
    }

    /// Whether sample `i` with observed label `label` counts as memorized.
    pub fn is_memorized(&self, i: usize, label: usize) -> bool {
        self.majority_label(i) == Some(label)
    }
}

/// Indices (ascending) whose majority historical prediction equals the noisy label.
pub fn memorized_set(hist: &PredictionHistory, noisy_labels: &[usize]) -> Result<Vec<usize>> {
    if noisy_labels.len() != hist.len() {
        return Err(Error::dim(format!(
            "{} labels for a history over {} samples",
            noisy_labels.len(),
            hist.len()
        )));
    }
    if hist.fill() == 0 {
        return Err(Error::NotReady("no epoch recorded yet".into()));
    }
    Ok(noisy_labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| hist.is_memorized(i, y))
        .map(|(i, _)| i)
        .collect())
}

/// Memorization recall and precision. `None` marks an undefined ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemorizationMetrics {
    pub recall: Option<f64>,
    pub precision: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn check_lengths(noisy: &[usize], truth: &[usize]) -> Result<()> {
    if noisy.len() != truth.len() {
        return Err(Error::dim("noisy and true label vectors differ in length"));
    }
    Ok(())
}

fn true_hits(set: &[usize], noisy: &[usize], truth: &[usize]) -> Result<usize> {
    let mut hits = 0;
    for &i in set {
        if i >= noisy.len() {
            return Err(Error::dim(format!("index {i} out of range")));
        }
        if noisy[i] == truth[i] {
            hits += 1;
        }
    }
    Ok(hits)
}

/// MR = |M ∩ clean| / |clean|, MP = |M ∩ clean| / |M|. `set` must not repeat indices.
pub fn mr_mp(set: &[usize], noisy: &[usize], truth: &[usize]) -> Result<MemorizationMetrics> {
    check_lengths(noisy, truth)?;
    let clean = noisy.iter().zip(truth).filter(|(a, b)| a == b).count();
    let hits = true_hits(set, noisy, truth)?;
    Ok(MemorizationMetrics {
        recall: ratio(hits, clean),
        precision: ratio(hits, set.len()),
    })
}

/// Quantity and quality of a set of samples selected as clean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionReport {
    pub label_recall: Option<f64>,
    pub label_precision: Option<f64>,
    pub f1: f64,
    pub set_size: usize,
}

pub fn f1_score(precision: Option<f64>, recall: Option<f64>) -> f64 {
    match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => 2.0 * p * r / (p + r),
        _ => 0.0,
    }
}

pub fn label_metrics(selected: &[usize], noisy: &[usize], truth: &[usize]) -> Result<SelectionReport> {
    let m = mr_mp(selected, noisy, truth)?;
    let recall = if selected.is_empty() { Some(0.0) } else { m.recall };
    Ok(SelectionReport {
        label_recall: recall,
        label_precision: m.precision,
        f1: f1_score(m.precision, recall),
        set_size: selected.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng as _;

    fn one_sample(q: usize, k: usize, pushes: &[usize]) -> PredictionHistory {
        let mut h = PredictionHistory::new(1, q, k).unwrap();
        for &p in pushes {
            h.record_epoch(&[p]).unwrap();
        }
        h
    }

    #[test]
    fn ring_eviction() {
        let h = one_sample(3, 3, &[1, 1, 2]);
        assert_eq!(h.buffer(0), vec![1, 1, 2]);
        let h = one_sample(3, 3, &[1, 1, 2, 0]);
        assert_eq!(h.buffer(0), vec![1, 2, 0]);
        assert_eq!(h.fill(), 3);
        assert_eq!(h.epoch(), 4);
    }

    #[test]
    fn record_rejects_wrong_length() {
        let mut h = PredictionHistory::new(4, 3, 3).unwrap();
        assert!(matches!(h.record_epoch(&[]), Err(Error::Dimension(_))));
    }

    #[test]
    fn label_probabilities() {
        let h = one_sample(3, 3, &[1, 1, 2]);
        assert!((h.label_prob(0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(h.label_prob(0, 0).unwrap(), 0.0);
        let empty = PredictionHistory::new(1, 3, 3).unwrap();
        assert!(matches!(empty.label_prob(0, 0), Err(Error::NotReady(_))));
    }

    #[test]
    fn partial_history_uses_fill_count() {
        let h = one_sample(10, 3, &[2, 0]);
        assert_eq!(h.label_prob(0, 2).unwrap(), 0.5);
    }

    #[test]
    fn tie_goes_to_lowest_class() {
        let h = one_sample(2, 3, &[1, 2]);
        assert!(h.is_memorized(0, 1));
        assert!(!h.is_memorized(0, 2));
        assert_eq!(memorized_set(&h, &[1]).unwrap(), vec![0]);
    }

    #[test]
    fn overwrite_latest_replaces_newest_slot() {
        let mut h = one_sample(3, 3, &[0, 1, 2, 2]);
        h.overwrite_latest(0, 0).unwrap();
        assert_eq!(h.buffer(0), vec![1, 2, 0]);
    }

    #[test]
    fn everything_memorized_when_predictions_match() {
        let labels = vec![0, 2, 1, 1, 0];
        let mut h = PredictionHistory::new(5, 4, 3).unwrap();
        for _ in 0..6 {
            h.record_epoch(&labels).unwrap();
        }
        assert_eq!(memorized_set(&h, &labels).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn no_epochs_means_not_memorized() {
        let h = PredictionHistory::new(2, 3, 3).unwrap();
        assert!(!h.is_memorized(0, 0));
        assert!(memorized_set(&h, &[0, 0]).is_err());
    }

    #[test]
    fn memorized_set_matches_brute_force() {
        let mut r = rng::from_seed(17);
        let (n, q, k) = (20, 5, 4);
        let mut h = PredictionHistory::new(n, q, k).unwrap();
        let mut log: Vec<Vec<usize>> = Vec::new();
        for _ in 0..8 {
            let p: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
            h.record_epoch(&p).unwrap();
            log.push(p);
        }
        let noisy: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let recent = &log[log.len() - q..];
        let expected: Vec<usize> = (0..n)
            .filter(|&i| {
                let mut best = (0usize, 0usize);
                for y in 0..k {
                    let c = recent.iter().filter(|p| p[i] == y).count();
                    if c > best.1 {
                        best = (y, c);
                    }
                }
                best.0 == noisy[i]
            })
            .collect();
        assert_eq!(memorized_set(&h, &noisy).unwrap(), expected);
    }

    #[test]
    fn mr_mp_limits() {
        let truth = vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0];
        let noisy = vec![0, 1, 2, 0, 1, 2, 1, 2, 0, 1];
        let clean: Vec<usize> = (0..6).collect();
        let m = mr_mp(&clean, &noisy, &truth).unwrap();
        assert_eq!((m.recall, m.precision), (Some(1.0), Some(1.0)));
        let all: Vec<usize> = (0..10).collect();
        let m = mr_mp(&all, &noisy, &truth).unwrap();
        assert_eq!(m.recall, Some(1.0));
        assert!((m.precision.unwrap() - 0.6).abs() < 1e-15);
        let m = mr_mp(&[], &noisy, &truth).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.recall, Some(0.0));
        let m = mr_mp(&[0], &[1], &[0]).unwrap();
        assert_eq!(m.recall, None);
    }

    #[test]
    fn label_metric_edge_cases() {
        assert!((f1_score(Some(0.9), Some(0.9)) - 0.9).abs() < 1e-15);
        let truth = vec![0, 1, 2, 0];
        let noisy = vec![0, 1, 0, 2];
        let r = label_metrics(&[0, 1], &noisy, &truth).unwrap();
        assert_eq!(r.f1, 1.0);
        let r = label_metrics(&[], &noisy, &truth).unwrap();
        assert_eq!(r.label_recall, Some(0.0));
        assert_eq!(r.label_precision, None);
        assert_eq!(r.f1, 0.0);
    }

    proptest! {
        #[test]
        fn metrics_match_exhaustive_recount(
            n in 1usize..100,
            seed in any::<u64>(),
        ) {
            let mut r = rng::from_seed(seed);
            let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
            let noisy: Vec<usize> = truth.iter().map(|&y| if r.random_bool(0.3) { (y + 1) % 3 } else { y }).collect();
            let set: Vec<usize> = (0..n).filter(|_| r.random_bool(0.5)).collect();
            let clean = (0..n).filter(|&i| noisy[i] == truth[i]).count();
            let hits = set.iter().filter(|&&i| noisy[i] == truth[i]).count();
            let m = mr_mp(&set, &noisy, &truth).unwrap();
            prop_assert_eq!(m.recall, if clean > 0 { Some(hits as f64 / clean as f64) } else { None });
            prop_assert_eq!(m.precision, if set.is_empty() { None } else { Some(hits as f64 / set.len() as f64) });
            let rep = label_metrics(&set, &noisy, &truth).unwrap();
            prop_assert_eq!(rep.set_size, set.len());
            if let (Some(p), Some(rc)) = (rep.label_precision, rep.label_recall) {
                if p + rc > 0.0 {
                    prop_assert!((rep.f1 - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn label_probs_sum_to_one(pushes in proptest::collection::vec(0usize..4, 1..20), q in 1usize..8) {
            let h = one_sample(q, 4, &pushes);
            let s: f64 = (0..4).map(|y| h.label_prob(0, y).unwrap()).sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
